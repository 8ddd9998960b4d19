#include "omd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "omd/core_math.hpp"
#include "omd/dataset_io.hpp"

namespace omd {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
}

SamplerMode sampler_mode_from(const std::string& s) {
    if (s == "shuffle") return SamplerMode::Shuffle;
    if (s == "initial") return SamplerMode::Initial;
    if (s == "similar") return SamplerMode::Similar;
    throw std::invalid_argument("config: unknown sampler_mode '" + s + "'");
}

TaskPairing pairing_from(const std::string& s) {
    if (s == "disjoint") return TaskPairing::Disjoint;
    if (s == "sliding") return TaskPairing::Sliding;
    throw std::invalid_argument("config: unknown task_pairing '" + s + "'");
}

}  // namespace

double CosineSchedule::at(std::size_t step) const {
    if (total_steps == 0) return init;
    double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return final_value + 0.5 * (init - final_value) * (1.0 + std::cos(std::numbers::pi * frac));
}

void TrainConfig::validate() const {
    if (dataset_path.empty() == !dataset_spec.has_value())
        throw std::invalid_argument("config: exactly one of dataset_path / dataset_spec required");
    if (extractor_dims.size() < 2)
        throw std::invalid_argument("config: extractor_dims needs input and output widths");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (warmup_epochs > epochs)
        throw std::invalid_argument("config: warmup_epochs must not exceed epochs");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (optimizer != "sgd" && optimizer != "adam")
        throw std::invalid_argument("config: optimizer must be sgd or adam");
    meta.validate();
}

TrainConfig parse_train_config(const std::string& json_text) {
    json j = json::parse(json_text);
    check_keys(j,
               {"dataset_path", "dataset_spec", "extractor_dims", "logit_scale", "meta",
                "schedule", "epochs", "warmup_epochs", "gwa", "sampler_mode", "task_pairing",
                "batch_size", "optimizer", "eval_splits", "seeds", "output_dir"},
               "top level");

    TrainConfig cfg;
    if (j.contains("dataset_path")) cfg.dataset_path = j.at("dataset_path").get<std::string>();
    if (j.contains("dataset_spec")) cfg.dataset_spec = spec_from_json(j.at("dataset_spec").dump());
    cfg.extractor_dims = j.at("extractor_dims").get<std::vector<std::size_t>>();
    if (j.contains("logit_scale")) cfg.logit_scale = j.at("logit_scale").get<double>();

    const json& m = j.at("meta");
    check_keys(m, {"alpha", "beta", "delta", "tasks_per_step"}, "meta");
    cfg.meta.alpha = m.at("alpha").get<double>();
    cfg.meta.beta = m.at("beta").get<double>();
    cfg.meta.delta = m.at("delta").get<double>();
    cfg.meta.tasks_per_step = m.at("tasks_per_step").get<std::size_t>();

    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        check_keys(s, {"alpha_init", "alpha_final", "beta_init", "beta_final", "total_steps"},
                   "schedule");
        cfg.has_schedule = true;
        if (s.contains("alpha_init")) cfg.meta.alpha = s.at("alpha_init").get<double>();
        if (s.contains("beta_init")) cfg.meta.beta = s.at("beta_init").get<double>();
        cfg.alpha_final = s.at("alpha_final").get<double>();
        cfg.beta_final = s.at("beta_final").get<double>();
        if (s.contains("total_steps")) cfg.total_steps = s.at("total_steps").get<std::size_t>();
    }

    cfg.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("warmup_epochs")) cfg.warmup_epochs = j.at("warmup_epochs").get<std::size_t>();

    if (j.contains("gwa")) {
        const json& g = j.at("gwa");
        check_keys(g, {"enabled", "mu", "sigma2", "include_warmup"}, "gwa");
        if (g.contains("enabled")) cfg.gwa.enabled = g.at("enabled").get<bool>();
        if (g.contains("mu")) cfg.gwa.mu = g.at("mu").get<double>();
        if (g.contains("sigma2")) cfg.gwa.sigma2 = g.at("sigma2").get<double>();
        if (g.contains("include_warmup")) cfg.gwa.include_warmup = g.at("include_warmup").get<bool>();
    }

    if (j.contains("sampler_mode")) cfg.sampler_mode = sampler_mode_from(j.at("sampler_mode").get<std::string>());
    if (j.contains("task_pairing")) cfg.task_pairing = pairing_from(j.at("task_pairing").get<std::string>());
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("optimizer")) cfg.optimizer = j.at("optimizer").get<std::string>();
    if (j.contains("eval_splits")) cfg.eval_splits = j.at("eval_splits").get<std::vector<std::string>>();

    if (j.contains("seeds")) {
        const json& s = j.at("seeds");
        check_keys(s, {"model", "sampler"}, "seeds");
        if (s.contains("model")) cfg.model_seed = s.at("model").get<std::uint64_t>();
        if (s.contains("sampler")) cfg.sampler_seed = s.at("sampler").get<std::uint64_t>();
    }
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();

    cfg.validate();
    return cfg;
}

std::uint64_t config_digest(const std::string& json_text) {
    // canonical form: nlohmann objects iterate in sorted key order
    return fnv1a(json::parse(json_text).dump());
}

double harmonic_mean(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("harmonic_mean: empty input");
    double s = 0.0;
    for (double v : values) {
        if (!(v > 0.0)) throw std::invalid_argument("harmonic_mean: values must be positive");
        s += 1.0 / v;
    }
    return static_cast<double>(values.size()) / s;
}

ScoreMatrix prediction_ensemble(const ScoreMatrix& a, const ScoreMatrix& b, double ratio) {
    if (a.scores.rows != b.scores.rows || a.scores.cols != b.scores.cols)
        throw std::invalid_argument("prediction_ensemble: shape mismatch");
    if (ratio < 0.0 || ratio > 1.0)
        throw std::invalid_argument("prediction_ensemble: ratio must lie in [0,1]");
    ScoreMatrix out;
    out.scores = Matrix(a.scores.rows, a.scores.cols);
    for (std::size_t i = 0; i < a.scores.data.size(); ++i)
        out.scores.data[i] = ratio * a.scores.data[i] + (1.0 - ratio) * b.scores.data[i];
    return out;
}

EvalReport evaluate(const ParamVector& theta, const SimilarityClassifier& classifier,
                    const Split& split, const std::vector<std::size_t>& class_subset,
                    const std::string& split_name) {
    if (class_subset.empty()) throw std::invalid_argument("evaluate: empty class subset");
    for (std::size_t c : class_subset)
        if (c >= classifier.num_classes()) throw std::invalid_argument("evaluate: class out of range");

    Matrix features = extract_features(theta, split.inputs, classifier);
    ScoreMatrix sm = cosine_scores(features, classifier);
    std::size_t k = std::min<std::size_t>(5, class_subset.size());
    double tau = classifier.logit_scale;

    // position of each class within the subset, or npos
    std::vector<std::size_t> subset_pos(classifier.num_classes(), static_cast<std::size_t>(-1));
    for (std::size_t i = 0; i < class_subset.size(); ++i) subset_pos[class_subset[i]] = i;

    std::size_t nblocks = (split.size() + kRowBlock - 1) / kRowBlock;
    std::vector<std::size_t> blk_top1(nblocks, 0), blk_topk(nblocks, 0), blk_loss_n(nblocks, 0);
    std::vector<double> blk_loss(nblocks, 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (nblocks > 1)
#endif
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
        std::size_t lo = blk * kRowBlock, hi = std::min(split.size(), lo + kRowBlock);
        for (std::size_t r = lo; r < hi; ++r) {
            std::size_t label = split.labels[r];
            std::size_t lpos = subset_pos[label];
            const double* row = sm.scores.row(r);
            if (lpos == static_cast<std::size_t>(-1)) continue; // never correct, no loss term
            double strue = row[label];
            std::size_t rank = 0;
            for (std::size_t c : class_subset) {
                double s = row[c];
                if (s > strue || (s == strue && c < label)) ++rank;
            }
            if (rank == 0) ++blk_top1[blk];
            if (rank < k) ++blk_topk[blk];
            // restricted softmax cross entropy
            double mx = -1e300;
            for (std::size_t c : class_subset) mx = std::max(mx, tau * row[c]);
            double denom = 0.0;
            for (std::size_t c : class_subset) denom += std::exp(tau * row[c] - mx);
            blk_loss[blk] += -(tau * strue - mx - std::log(denom));
            ++blk_loss_n[blk];
        }
    }

    EvalReport out;
    out.split = split_name;
    std::size_t top1 = 0, topk = 0, loss_n = 0;
    double loss = 0.0;
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
        top1 += blk_top1[blk];
        topk += blk_topk[blk];
        loss += blk_loss[blk];
        loss_n += blk_loss_n[blk];
    }
    // only samples whose label lies in the subset count
    out.n = loss_n;
    out.top1 = loss_n ? static_cast<double>(top1) / static_cast<double>(loss_n) : 0.0;
    out.top5 = loss_n ? static_cast<double>(topk) / static_cast<double>(loss_n) : 0.0;
    out.mean_loss = loss_n ? loss / static_cast<double>(loss_n) : 0.0;
    return out;
}

SimilarityClassifier make_classifier(const SyntheticDataset& dataset,
                                     const std::vector<std::size_t>& extractor_dims,
                                     double logit_scale) {
    SimilarityClassifier cls;
    cls.class_embeddings = dataset.class_embeddings;
    cls.extractor_dims = extractor_dims;
    cls.logit_scale = logit_scale;
    if (!extractor_dims.empty() && extractor_dims.front() != dataset.spec.d_x())
        throw std::invalid_argument("config: extractor input width must equal dataset d_x");
    cls.validate();
    return cls;
}

TrainResult train(const TrainConfig& config, const SyntheticDataset* dataset,
                  std::uint64_t digest) {
    config.validate();
    SyntheticDataset owned;
    if (!dataset) {
        owned = config.dataset_spec ? generate_dataset(*config.dataset_spec)
                                    : import_dataset(config.dataset_path);
        dataset = &owned;
    }
    SimilarityClassifier classifier =
        make_classifier(*dataset, config.extractor_dims, config.logit_scale);
    const Split& trainsplit = dataset->splits.at("train_base");
    BaseNovelSplit bn = split_base_novel(*dataset);

    std::size_t nb = trainsplit.size() / config.batch_size;
    if (nb < 1) throw std::invalid_argument("train: batch_size exceeds training split");
    std::size_t tasks_total = config.task_pairing == TaskPairing::Disjoint ? nb / 2 : nb - 1;
    std::size_t groups_per_epoch =
        (tasks_total + config.meta.tasks_per_step - 1) / config.meta.tasks_per_step;
    std::size_t meta_epochs = config.epochs - config.warmup_epochs;
    std::size_t total_steps = config.total_steps;
    if (total_steps == 0)
        total_steps = config.warmup_epochs * nb + meta_epochs * groups_per_epoch;

    CosineSchedule alpha_sched{config.meta.alpha,
                               config.has_schedule ? config.alpha_final : config.meta.alpha,
                               total_steps};
    CosineSchedule beta_sched{config.meta.beta,
                              config.has_schedule ? config.beta_final : config.meta.beta,
                              total_steps};

    std::size_t gwa_horizon =
        config.gwa.include_warmup ? config.epochs : std::max<std::size_t>(meta_epochs, 1);
    double mu = config.gwa.mu > 0.0 ? config.gwa.mu
                                    : std::ceil(0.6 * static_cast<double>(gwa_horizon));
    GwaState gwa_state = GwaState::make(mu, config.gwa.sigma2, gwa_horizon, nb);

    std::vector<std::string> eval_splits = config.eval_splits;
    if (eval_splits.empty())
        eval_splits = {"test_base_ic", "test_novel_ic", "test_base_ooc", "test_novel_ooc"};

    ParamVector theta = init_params(classifier, config.model_seed);
    AdamState adam = AdamState::like(theta);
    bool use_adam = config.optimizer == "adam";

    std::ostringstream csv;
    csv << "epoch,step,split,metric,value\n";
    TrainResult result;
    result.digest = digest;

    fs::path outdir;
    if (!config.output_dir.empty()) {
        outdir = config.output_dir;
        fs::create_directories(outdir);
    }

    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<Batch> batches = batch_stream(trainsplit, config.sampler_mode,
                                                  config.batch_size, config.sampler_seed,
                                                  epoch - 1, dataset->class_embeddings);
        double loss_sum = 0.0;
        std::size_t loss_count = 0;

        if (epoch <= config.warmup_epochs) {
            for (const Batch& batch : batches) {
                double lr = alpha_sched.at(step);
                LossGrad lg = loss_and_grad(theta, batch, classifier);
                if (!std::isfinite(lg.loss))
                    throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
                theta.add_scaled(lg.grad, -lr);
                loss_sum += lg.loss;
                ++loss_count;
                ++step;
            }
        } else {
            auto groups = pair_tasks(batches, config.meta.tasks_per_step, config.task_pairing);
            for (const auto& group : groups) {
                MetaStepConfig cfg = config.meta;
                cfg.alpha = alpha_sched.at(step);
                cfg.beta = beta_sched.at(step);
                FomamlResult res =
                    fomaml_step(theta, group, cfg, classifier, use_adam ? &adam : nullptr);
                for (const auto& tr : res.report.tasks) {
                    if (!std::isfinite(tr.support_loss) || !std::isfinite(tr.query_loss))
                        throw std::runtime_error("train: non-finite loss at step " +
                                                 std::to_string(step));
                    loss_sum += tr.support_loss;
                    ++loss_count;
                }
                theta = std::move(res.theta_new);
                ++step;
            }
        }

        result.trajectory.push_back(theta);
        if (config.gwa.enabled && (config.gwa.include_warmup || epoch > config.warmup_epochs))
            gwa_state = gwa_update(gwa_state, theta);

        if (!outdir.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%03zu.omd1", epoch);
            save_checkpoint((outdir / name).string(),
                            theta, {static_cast<std::uint32_t>(epoch), digest});
        }

        csv << epoch << "," << step << ",train,loss,"
            << fmt_double(loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0) << "\n";
        for (const auto& name : eval_splits) {
            auto it = dataset->splits.find(name);
            if (it == dataset->splits.end())
                throw std::invalid_argument("train: unknown eval split '" + name + "'");
            const auto& subset =
                name.find("novel") != std::string::npos ? bn.novel : bn.base;
            EvalReport rep = evaluate(theta, classifier, it->second, subset, name);
            csv << epoch << "," << step << "," << name << ",top1," << fmt_double(rep.top1) << "\n";
            csv << epoch << "," << step << "," << name << ",top5," << fmt_double(rep.top5) << "\n";
            csv << epoch << "," << step << "," << name << ",loss," << fmt_double(rep.mean_loss)
                << "\n";
        }
    }

    result.final_theta = theta;
    result.gwa_theta =
        (config.gwa.enabled && gwa_state.epoch_index > 0) ? gwa_finalize(gwa_state) : theta;
    result.metrics_csv = csv.str();

    if (!outdir.empty()) {
        save_checkpoint((outdir / "final.omd1").string(), result.final_theta,
                        {static_cast<std::uint32_t>(config.epochs), digest});
        save_checkpoint((outdir / "gwa.omd1").string(), result.gwa_theta,
                        {static_cast<std::uint32_t>(config.epochs), digest});
        std::ofstream os(outdir / "metrics.csv", std::ios::binary);
        os << result.metrics_csv;
    }
    return result;
}

}  // namespace omd
