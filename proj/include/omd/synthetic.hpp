#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "omd/classifier.hpp"
#include "omd/meta.hpp"

namespace omd {

enum class OocMode { Resample, Swap };

// Feature-space static-bias benchmark parameters. Inputs are the
// concatenation of a motion part (a hidden linear map of the class
// embedding) and a static part (a context prototype), both noised.
struct DatasetSpec {
    std::size_t k_base = 10;
    std::size_t k_novel = 10;
    std::size_t d_embed = 8;
    std::size_t d_motion = 8;
    std::size_t d_static = 8;
    std::size_t n_contexts = 10;
    double bias_rho = 0.9;       // P(ctx == assigned context of the class) in biased splits
    double noise_sigma = 0.1;
    std::size_t samples_per_class_train = 200;
    std::size_t samples_per_class_test = 50;
    std::uint64_t seed = 0;
    OocMode ooc_mode = OocMode::Resample;

    std::size_t num_classes() const { return k_base + k_novel; }
    std::size_t d_x() const { return d_motion + d_static; }
    void validate() const;
};

// One evaluation/training split stored flat; contexts kept for calibration
// checks.
struct Split {
    Matrix inputs;
    std::vector<std::size_t> labels;
    std::vector<std::int64_t> sample_ids;
    std::vector<std::size_t> contexts;

    std::size_t size() const { return inputs.rows; }
};

inline const std::vector<std::string>& split_names() {
    static const std::vector<std::string> names = {"train_base", "test_base_ic", "test_novel_ic",
                                                   "test_base_ooc", "test_novel_ooc"};
    return names;
}

struct SyntheticDataset {
    DatasetSpec spec;
    Matrix class_embeddings;               // (k_base + k_novel) x d_embed, unit rows
    std::vector<std::size_t> class_context_assignment;
    Matrix motion_map;                     // d_motion x d_embed
    Matrix context_prototypes;             // n_contexts x d_static
    std::map<std::string, Split> splits;
};

SyntheticDataset generate_dataset(const DatasetSpec& spec);

struct BaseNovelSplit {
    std::vector<std::size_t> base;
    std::vector<std::size_t> novel;
};

// First k_base classes are base, the rest novel.
BaseNovelSplit split_base_novel(const SyntheticDataset& dataset);

enum class SamplerMode { Shuffle, Initial, Similar };

// Without-replacement partition of a split into floor(M/B) full batches.
// shuffle: fresh seeded permutation per epoch; initial: dataset order;
// similar: samples ordered by a greedy class tour over embedding cosines.
std::vector<Batch> batch_stream(const Split& split, SamplerMode mode, std::size_t batch_size,
                                std::uint64_t seed, std::size_t epoch,
                                const Matrix& class_embeddings);

enum class TaskPairing { Disjoint, Sliding };

// Groups of up to N support/query tasks built from consecutive batches.
// Disjoint: task i = (batch 2i, batch 2i+1) within each group; sliding:
// batch k is query of task k-1 and support of task k.
std::vector<std::vector<MetaTask>> pair_tasks(const std::vector<Batch>& batches, std::size_t n,
                                              TaskPairing pairing = TaskPairing::Disjoint);

}  // namespace omd
