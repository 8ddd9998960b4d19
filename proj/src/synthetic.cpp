#include "omd/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "omd/rng.hpp"

namespace omd {
namespace {

Matrix unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        double n = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            m(i, j) = rng.normal();
            n += m(i, j) * m(i, j);
        }
        n = std::sqrt(n);
        while (n == 0.0) { // astronomically unlikely; redraw
            n = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                m(i, j) = rng.normal();
                n += m(i, j) * m(i, j);
            }
            n = std::sqrt(n);
        }
        for (std::size_t j = 0; j < cols; ++j) m(i, j) /= n;
    }
    return m;
}

std::size_t draw_biased_context(Rng& rng, std::size_t assigned, std::size_t n_contexts,
                                double rho) {
    if (n_contexts == 1) return 0;
    if (rng.uniform() < rho) return assigned;
    std::size_t idx = static_cast<std::size_t>(rng.bounded(n_contexts - 1));
    return idx >= assigned ? idx + 1 : idx;
}

Split make_split(const SyntheticDataset& ds, const std::vector<std::size_t>& classes,
                 std::size_t samples_per_class, bool out_of_context, Rng& rng,
                 std::int64_t& next_id) {
    const DatasetSpec& spec = ds.spec;
    std::size_t n = classes.size() * samples_per_class;
    Split split;
    split.inputs = Matrix(n, spec.d_x());
    split.labels.reserve(n);
    split.sample_ids.reserve(n);
    split.contexts.reserve(n);

    std::size_t row = 0;
    for (std::size_t c : classes) {
        std::size_t assigned = ds.class_context_assignment[c];
        for (std::size_t s = 0; s < samples_per_class; ++s, ++row) {
            std::size_t ctx;
            if (!out_of_context) {
                ctx = draw_biased_context(rng, assigned, spec.n_contexts, spec.bias_rho);
            } else if (spec.ooc_mode == OocMode::Resample) {
                ctx = static_cast<std::size_t>(rng.bounded(spec.n_contexts));
            } else { // swap to the next class's assigned context
                ctx = ds.class_context_assignment[(c + 1) % spec.num_classes()];
            }
            double* x = split.inputs.row(row);
            const double* t = ds.class_embeddings.row(c);
            for (std::size_t i = 0; i < spec.d_motion; ++i) {
                double z = 0.0;
                const double* mrow = ds.motion_map.row(i);
                for (std::size_t j = 0; j < spec.d_embed; ++j) z += mrow[j] * t[j];
                x[i] = z + spec.noise_sigma * rng.normal();
            }
            const double* proto = ds.context_prototypes.row(ctx);
            for (std::size_t i = 0; i < spec.d_static; ++i)
                x[spec.d_motion + i] = proto[i] + spec.noise_sigma * rng.normal();
            split.labels.push_back(c);
            split.sample_ids.push_back(next_id++);
            split.contexts.push_back(ctx);
        }
    }
    return split;
}

}  // namespace

void DatasetSpec::validate() const {
    if (k_base < 1 || k_novel < 1) throw std::invalid_argument("DatasetSpec: need base and novel classes");
    if (d_embed < 1 || d_motion < 1 || d_static < 1)
        throw std::invalid_argument("DatasetSpec: dimensions must be positive");
    if (n_contexts < 1) throw std::invalid_argument("DatasetSpec: n_contexts must be positive");
    if (bias_rho < 0.0 || bias_rho > 1.0)
        throw std::invalid_argument("DatasetSpec: bias_rho must lie in [0,1]");
    if (!(noise_sigma > 0.0)) throw std::invalid_argument("DatasetSpec: noise_sigma must be > 0");
    if (samples_per_class_train < 1 || samples_per_class_test < 1)
        throw std::invalid_argument("DatasetSpec: samples per class must be positive");
}

SyntheticDataset generate_dataset(const DatasetSpec& spec) {
    spec.validate();
    SyntheticDataset ds;
    ds.spec = spec;
    Rng rng(spec.seed);

    ds.class_embeddings = unit_rows(spec.num_classes(), spec.d_embed, rng);
    ds.class_context_assignment.resize(spec.num_classes());
    for (std::size_t c = 0; c < spec.num_classes(); ++c)
        ds.class_context_assignment[c] = c % spec.n_contexts;

    double scale = 1.0 / std::sqrt(static_cast<double>(spec.d_embed));
    ds.motion_map = Matrix(spec.d_motion, spec.d_embed);
    for (double& v : ds.motion_map.data) v = scale * rng.normal();

    ds.context_prototypes = unit_rows(spec.n_contexts, spec.d_static, rng);

    std::vector<std::size_t> base(spec.k_base), novel(spec.k_novel);
    std::iota(base.begin(), base.end(), 0);
    std::iota(novel.begin(), novel.end(), spec.k_base);

    std::int64_t next_id = 0;
    ds.splits["train_base"] = make_split(ds, base, spec.samples_per_class_train, false, rng, next_id);
    ds.splits["test_base_ic"] = make_split(ds, base, spec.samples_per_class_test, false, rng, next_id);
    ds.splits["test_novel_ic"] = make_split(ds, novel, spec.samples_per_class_test, false, rng, next_id);
    ds.splits["test_base_ooc"] = make_split(ds, base, spec.samples_per_class_test, true, rng, next_id);
    ds.splits["test_novel_ooc"] = make_split(ds, novel, spec.samples_per_class_test, true, rng, next_id);
    return ds;
}

BaseNovelSplit split_base_novel(const SyntheticDataset& dataset) {
    BaseNovelSplit out;
    out.base.resize(dataset.spec.k_base);
    out.novel.resize(dataset.spec.k_novel);
    std::iota(out.base.begin(), out.base.end(), 0);
    std::iota(out.novel.begin(), out.novel.end(), dataset.spec.k_base);
    return out;
}

std::vector<Batch> batch_stream(const Split& split, SamplerMode mode, std::size_t batch_size,
                                std::uint64_t seed, std::size_t epoch,
                                const Matrix& class_embeddings) {
    std::size_t m = split.size();
    if (batch_size < 1 || batch_size > m)
        throw std::invalid_argument("batch_stream: batch size exceeds split size");

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    if (mode == SamplerMode::Shuffle) {
        Rng rng(mix_seed(seed, epoch));
        rng.shuffle(order);
    } else if (mode == SamplerMode::Similar) {
        // greedy class tour maximizing adjacent-class embedding cosine
        std::vector<std::size_t> classes;
        for (std::size_t l : split.labels) classes.push_back(l);
        std::sort(classes.begin(), classes.end());
        classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

        std::vector<std::size_t> tour;
        std::vector<bool> visited(classes.size(), false);
        std::size_t cur = 0;
        visited[0] = true;
        tour.push_back(classes[0]);
        for (std::size_t step = 1; step < classes.size(); ++step) {
            double best = -2.0;
            std::size_t best_i = 0;
            for (std::size_t i = 0; i < classes.size(); ++i) {
                if (visited[i]) continue;
                double dot = 0.0;
                for (std::size_t j = 0; j < class_embeddings.cols; ++j)
                    dot += class_embeddings(classes[cur], j) * class_embeddings(classes[i], j);
                if (dot > best) {
                    best = dot;
                    best_i = i;
                }
            }
            visited[best_i] = true;
            tour.push_back(classes[best_i]);
            cur = best_i;
        }
        std::vector<std::size_t> pos(class_embeddings.rows, 0);
        for (std::size_t i = 0; i < tour.size(); ++i) pos[tour[i]] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return pos[split.labels[a]] < pos[split.labels[b]];
        });
    }

    std::size_t n_batches = m / batch_size;
    std::vector<Batch> out;
    out.reserve(n_batches);
    for (std::size_t b = 0; b < n_batches; ++b) {
        Batch batch;
        batch.inputs = Matrix(batch_size, split.inputs.cols);
        batch.labels.resize(batch_size);
        batch.sample_ids.resize(batch_size);
        for (std::size_t i = 0; i < batch_size; ++i) {
            std::size_t src = order[b * batch_size + i];
            std::copy(split.inputs.row(src), split.inputs.row(src) + split.inputs.cols,
                      batch.inputs.row(i));
            batch.labels[i] = split.labels[src];
            batch.sample_ids[i] = split.sample_ids[src];
        }
        out.push_back(std::move(batch));
    }
    return out;
}

std::vector<std::vector<MetaTask>> pair_tasks(const std::vector<Batch>& batches, std::size_t n,
                                              TaskPairing pairing) {
    if (n < 1) throw std::invalid_argument("pair_tasks: tasks per step must be >= 1");
    if (batches.size() < 2) throw std::invalid_argument("pair_tasks: fewer than 2 batches");

    std::vector<std::vector<MetaTask>> groups;
    if (pairing == TaskPairing::Disjoint) {
        std::size_t i = 0;
        while (i + 2 <= batches.size()) {
            std::vector<MetaTask> group;
            while (group.size() < n && i + 2 <= batches.size()) {
                group.emplace_back(batches[i], batches[i + 1]);
                i += 2;
            }
            groups.push_back(std::move(group));
        }
    } else {
        std::vector<MetaTask> group;
        for (std::size_t i = 0; i + 1 < batches.size(); ++i) {
            group.emplace_back(batches[i], batches[i + 1]);
            if (group.size() == n) {
                groups.push_back(std::move(group));
                group.clear();
            }
        }
        if (!group.empty()) groups.push_back(std::move(group));
    }
    return groups;
}

}  // namespace omd
