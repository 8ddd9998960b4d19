#pragma once

#include <optional>
#include <string>
#include <vector>

#include "omd/checkpoint.hpp"
#include "omd/gwa.hpp"
#include "omd/synthetic.hpp"

namespace omd {

// lr(s) = final + 0.5 * (init - final) * (1 + cos(pi * s / total_steps))
struct CosineSchedule {
    double init = 1e-2;
    double final_value = 1e-4;
    std::size_t total_steps = 1;

    double at(std::size_t step) const;
};

struct GwaConfig {
    bool enabled = true;
    double mu = 0.0;      // <= 0 selects ceil(0.6 * horizon)
    double sigma2 = 10.0;
    bool include_warmup = true; // snapshot warm-up epochs into GWA
};

struct TrainConfig {
    std::string dataset_path;                 // exactly one of path / spec
    std::optional<DatasetSpec> dataset_spec;
    std::vector<std::size_t> extractor_dims;  // full widths incl. input and d_embed
    double logit_scale = 10.0;
    MetaStepConfig meta;                      // alpha/beta are the initial rates
    bool has_schedule = false;
    double alpha_final = 1e-4;
    double beta_final = 1e-4;
    std::size_t total_steps = 0;              // 0 = derive from data and epochs
    std::size_t epochs = 20;
    std::size_t warmup_epochs = 0;
    GwaConfig gwa;
    SamplerMode sampler_mode = SamplerMode::Shuffle;
    TaskPairing task_pairing = TaskPairing::Disjoint;
    std::size_t batch_size = 8;
    std::string optimizer = "sgd";            // "sgd" (literal outer update) or "adam"
    std::vector<std::string> eval_splits;     // default: the four test splits
    std::uint64_t model_seed = 1;
    std::uint64_t sampler_seed = 1;
    std::string output_dir;

    void validate() const;
};

// Strict parse: unknown keys anywhere in the document are errors.
TrainConfig parse_train_config(const std::string& json_text);
std::uint64_t config_digest(const std::string& json_text);

struct EvalReport {
    std::string split;
    double top1 = 0.0;
    double top5 = 0.0;
    double mean_loss = 0.0;
    std::size_t n = 0;
};

// Zero-shot evaluation restricted to class_subset columns; argmax ties break
// toward the lowest class index; top-k uses k = min(5, |subset|).
EvalReport evaluate(const ParamVector& theta, const SimilarityClassifier& classifier,
                    const Split& split, const std::vector<std::size_t>& class_subset,
                    const std::string& split_name = "");

// n / sum(1/v); all values must be positive.
double harmonic_mean(const std::vector<double>& values);

// ratio * a + (1 - ratio) * b
ScoreMatrix prediction_ensemble(const ScoreMatrix& a, const ScoreMatrix& b, double ratio);

struct TrainResult {
    ParamVector final_theta;
    ParamVector gwa_theta;
    std::vector<ParamVector> trajectory; // one snapshot per epoch
    std::string metrics_csv;
    std::uint64_t digest = 0;
};

// Full training loop: warm-up epochs of plain fine-tuning, then cross-batch
// meta steps; per-epoch GWA snapshots, checkpoints and eval metrics. When
// dataset is null it is generated/loaded from the config. Writes metrics.csv
// and checkpoints into output_dir when set.
TrainResult train(const TrainConfig& config, const SyntheticDataset* dataset = nullptr,
                  std::uint64_t digest = 0);

// Classifier over the dataset's class table under the given architecture.
SimilarityClassifier make_classifier(const SyntheticDataset& dataset,
                                     const std::vector<std::size_t>& extractor_dims,
                                     double logit_scale);

}  // namespace omd
