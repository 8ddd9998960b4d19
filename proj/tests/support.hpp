// Shared test fixtures and independent oracles. Everything here is test-only
// and deliberately avoids the library's analytic gradient path.
#pragma once

#include <cmath>
#include <vector>

#include "omd/core_math.hpp"
#include "omd/meta.hpp"
#include "omd/rng.hpp"
#include "omd/synthetic.hpp"

namespace omd::test {

inline Matrix random_unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        double n = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            m(i, j) = rng.normal();
            n += m(i, j) * m(i, j);
        }
        n = std::sqrt(n);
        for (std::size_t j = 0; j < cols; ++j) m(i, j) /= n;
    }
    return m;
}

struct Instance {
    SimilarityClassifier cls;
    ParamVector theta;
    Batch batch;
};

// random small classifier/batch pair; dims bounded for oracle tests
inline Instance random_instance(Rng& rng, std::size_t max_dx = 8, std::size_t max_b = 8,
                                std::size_t max_k = 6) {
    Instance inst;
    std::size_t d_x = 2 + rng.bounded(max_dx - 1);
    std::size_t k = 2 + rng.bounded(max_k - 1);
    std::size_t b = 1 + rng.bounded(max_b);
    std::size_t hidden = 2 + rng.bounded(4);
    std::size_t d_embed = 2 + rng.bounded(3);
    inst.cls.extractor_dims = {d_x, hidden, d_embed};
    inst.cls.class_embeddings = random_unit_rows(k, d_embed, rng);
    inst.theta = init_params(inst.cls, rng.raw());
    inst.batch.inputs = Matrix(b, d_x);
    for (double& v : inst.batch.inputs.data) v = rng.normal();
    for (std::size_t i = 0; i < b; ++i) {
        inst.batch.labels.push_back(rng.bounded(k));
        inst.batch.sample_ids.push_back(static_cast<std::int64_t>(i));
    }
    return inst;
}

// closed-form surrogate 0.5 * c * ||theta - target||^2
class QuadraticObjective final : public Objective {
  public:
    QuadraticObjective(ParamVector target, double c = 1.0) : target_(std::move(target)), c_(c) {}
    LossGrad loss_and_grad(const ParamVector& theta) const override {
        LossGrad out;
        out.grad = theta;
        out.grad.add_scaled(target_, -1.0);
        out.loss = 0.5 * c_ * out.grad.dot(out.grad);
        out.grad.scale(c_);
        return out;
    }

  private:
    ParamVector target_;
    double c_;
};

inline ParamVector scalar_param(double v) {
    return ParamVector({{"x", {1}}}, {v});
}

// direct (non-streaming) normalized Gaussian weighted sum oracle
inline ParamVector direct_gaussian_average(const std::vector<ParamVector>& thetas, double mu,
                                           double sigma2) {
    std::vector<double> w;
    for (std::size_t t = 1; t <= thetas.size(); ++t) {
        double d = static_cast<double>(t) - mu;
        w.push_back(std::exp(-d * d / (2.0 * sigma2)));
    }
    double sum = 0.0;
    for (double x : w) sum += x;
    ParamVector out = ParamVector::zeros_like(thetas.front());
    for (std::size_t t = 0; t < thetas.size(); ++t) out.add_scaled(thetas[t], w[t] / sum);
    return out;
}

// nearest-context-prototype classifier mapped through the class/context
// assignment; picks the lowest-index class in `candidates` assigned to the
// winning context
inline double static_oracle_accuracy(const SyntheticDataset& ds, const Split& split,
                                     const std::vector<std::size_t>& candidates) {
    std::size_t correct = 0;
    for (std::size_t r = 0; r < split.size(); ++r) {
        const double* x = split.inputs.row(r) + ds.spec.d_motion;
        double best = 1e300;
        std::size_t best_ctx = 0;
        for (std::size_t c = 0; c < ds.spec.n_contexts; ++c) {
            double d = 0.0;
            for (std::size_t j = 0; j < ds.spec.d_static; ++j) {
                double diff = x[j] - ds.context_prototypes(c, j);
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_ctx = c;
            }
        }
        for (std::size_t cls : candidates) {
            if (ds.class_context_assignment[cls] == best_ctx) {
                if (cls == split.labels[r]) ++correct;
                break;
            }
        }
    }
    return static_cast<double>(correct) / static_cast<double>(split.size());
}

// brute-force nearest class in motion space using the true motion map
inline double motion_oracle_accuracy(const SyntheticDataset& ds, const Split& split,
                                     const std::vector<std::size_t>& candidates) {
    std::size_t correct = 0;
    for (std::size_t r = 0; r < split.size(); ++r) {
        const double* x = split.inputs.row(r);
        double best = 1e300;
        std::size_t best_cls = 0;
        for (std::size_t cls : candidates) {
            double d = 0.0;
            for (std::size_t i = 0; i < ds.spec.d_motion; ++i) {
                double z = 0.0;
                for (std::size_t j = 0; j < ds.spec.d_embed; ++j)
                    z += ds.motion_map(i, j) * ds.class_embeddings(cls, j);
                double diff = x[i] - z;
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_cls = cls;
            }
        }
        if (best_cls == split.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(split.size());
}

// Pearson chi-squared statistic of the (class, context) contingency table
inline double chi_squared_independence(const Split& split, std::size_t n_classes,
                                       std::size_t n_contexts) {
    std::vector<double> table(n_classes * n_contexts, 0.0);
    std::vector<double> row(n_classes, 0.0), col(n_contexts, 0.0);
    double n = static_cast<double>(split.size());
    for (std::size_t r = 0; r < split.size(); ++r) {
        table[split.labels[r] * n_contexts + split.contexts[r]] += 1.0;
        row[split.labels[r]] += 1.0;
        col[split.contexts[r]] += 1.0;
    }
    double stat = 0.0;
    for (std::size_t i = 0; i < n_classes; ++i)
        for (std::size_t j = 0; j < n_contexts; ++j) {
            double expected = row[i] * col[j] / n;
            if (expected > 0.0) {
                double d = table[i * n_contexts + j] - expected;
                stat += d * d / expected;
            }
        }
    return stat;
}

// Wilson-Hilferty upper quantile of chi-squared at the 1% level
inline double chi_squared_crit_99(double df) {
    double z = 2.3263478740408408;
    double a = 2.0 / (9.0 * df);
    double c = 1.0 - a + z * std::sqrt(a);
    return df * c * c * c;
}

inline double cosine_between(const ParamVector& a, const ParamVector& b) {
    return a.dot(b) / (a.norm() * b.norm());
}

}  // namespace omd::test
