#include "omd/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "omd/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace omd {
namespace {

Layout expected_layout(const std::vector<std::size_t>& dims) {
    Layout layout;
    for (std::size_t l = 1; l < dims.size(); ++l) {
        layout.push_back({"W" + std::to_string(l), {dims[l], dims[l - 1]}});
        layout.push_back({"b" + std::to_string(l), {dims[l]}});
    }
    return layout;
}

// per-layer offsets of W_l / b_l within the flat value array
struct LayerOffsets {
    std::vector<std::size_t> w_off, b_off;
};

LayerOffsets layer_offsets(const std::vector<std::size_t>& dims) {
    LayerOffsets off;
    std::size_t pos = 0;
    for (std::size_t l = 1; l < dims.size(); ++l) {
        off.w_off.push_back(pos);
        pos += dims[l] * dims[l - 1];
        off.b_off.push_back(pos);
        pos += dims[l];
    }
    return off;
}

void check_params(const ParamVector& params, const SimilarityClassifier& classifier) {
    if (params.layout != expected_layout(classifier.extractor_dims))
        throw std::invalid_argument("params layout does not match extractor_dims");
    if (!params.all_finite()) throw std::runtime_error("non-finite parameter vector");
}

// forward pass of one input row; acts[l] is the post-activation of layer l,
// acts[0] the input, acts.back() the feature vector
void forward_row(const double* params, const std::vector<std::size_t>& dims,
                 const LayerOffsets& off, const double* x,
                 std::vector<std::vector<double>>& acts) {
    std::size_t num_layers = dims.size() - 1;
    acts.resize(dims.size());
    acts[0].assign(x, x + dims[0]);
    for (std::size_t l = 0; l < num_layers; ++l) {
        std::size_t out_w = dims[l + 1], in_w = dims[l];
        const double* w = params + off.w_off[l];
        const double* b = params + off.b_off[l];
        auto& out = acts[l + 1];
        out.assign(out_w, 0.0);
        for (std::size_t i = 0; i < out_w; ++i) {
            double z = b[i];
            const double* wrow = w + i * in_w;
            for (std::size_t j = 0; j < in_w; ++j) z += wrow[j] * acts[l][j];
            out[i] = (l + 1 < num_layers) ? std::tanh(z) : z;
        }
    }
}

// softmax cross entropy for one score row; returns loss, fills probs
double row_ce(const double* scores, std::size_t k, std::size_t label, double tau, double* probs) {
    double mx = tau * scores[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, tau * scores[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        probs[j] = std::exp(tau * scores[j] - mx);
        denom += probs[j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[j] /= denom;
    return -(tau * scores[label] - mx - std::log(denom));
}

// loss of one sample; when grad != nullptr also accumulates the analytic
// gradient contribution (pre 1/B scaling) into it
double row_loss_grad(const double* params, const std::vector<std::size_t>& dims,
                     const LayerOffsets& off, const SimilarityClassifier& classifier,
                     const double* x, std::size_t label, double* grad,
                     std::vector<std::vector<double>>& acts) {
    forward_row(params, dims, off, x, acts);
    const auto& v = acts.back();
    std::size_t d = v.size(), k = classifier.num_classes();
    double tau = classifier.logit_scale;

    double nraw = 0.0;
    for (double vi : v) nraw += vi * vi;
    nraw = std::sqrt(nraw);
    double n = std::max(nraw, classifier.norm_epsilon);

    std::vector<double> scores(k), tnorm(k), probs(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double* t = classifier.class_embeddings.row(j);
        double dotv = 0.0, tn = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            dotv += v[i] * t[i];
            tn += t[i] * t[i];
        }
        tnorm[j] = std::sqrt(tn);
        scores[j] = dotv / (n * tnorm[j]);
    }
    double loss = row_ce(scores.data(), k, label, tau, probs.data());
    if (!grad) return loss;

    // dL/dv through the cosine scores
    std::vector<double> dv(d, 0.0);
    double radial = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        double g = tau * (probs[j] - (j == label ? 1.0 : 0.0));
        const double* t = classifier.class_embeddings.row(j);
        double c = g / (n * tnorm[j]);
        for (std::size_t i = 0; i < d; ++i) dv[i] += c * t[i];
        radial += g * scores[j];
    }
    if (nraw > classifier.norm_epsilon) {
        double c = radial / (n * nraw);
        for (std::size_t i = 0; i < d; ++i) dv[i] -= c * v[i];
    }

    // backprop through the MLP
    std::size_t num_layers = dims.size() - 1;
    std::vector<double> dh = dv, dz;
    for (std::size_t l = num_layers; l-- > 0;) {
        std::size_t out_w = dims[l + 1], in_w = dims[l];
        const auto& h_out = acts[l + 1];
        if (l + 1 < num_layers) {
            dz.resize(out_w);
            for (std::size_t i = 0; i < out_w; ++i) dz[i] = dh[i] * (1.0 - h_out[i] * h_out[i]);
        } else {
            dz = dh;
        }
        double* gw = grad + off.w_off[l];
        double* gb = grad + off.b_off[l];
        const auto& h_in = acts[l];
        for (std::size_t i = 0; i < out_w; ++i) {
            gb[i] += dz[i];
            double* gwrow = gw + i * in_w;
            for (std::size_t j = 0; j < in_w; ++j) gwrow[j] += dz[i] * h_in[j];
        }
        if (l > 0) {
            const double* w = params + off.w_off[l];
            dh.assign(in_w, 0.0);
            for (std::size_t i = 0; i < out_w; ++i) {
                const double* wrow = w + i * in_w;
                for (std::size_t j = 0; j < in_w; ++j) dh[j] += wrow[j] * dz[i];
            }
        }
    }
    return loss;
}

void throw_on_nonfinite(const ParamVector& grad, double loss) {
    if (std::isfinite(loss) && grad.all_finite()) return;
    if (!std::isfinite(loss)) throw std::runtime_error("loss_and_grad: non-finite loss");
    std::size_t pos = 0;
    for (const auto& seg : grad.layout) {
        for (std::size_t i = 0; i < seg.size(); ++i, ++pos)
            if (!std::isfinite(grad.values[pos]))
                throw std::runtime_error("loss_and_grad: non-finite gradient in segment " + seg.name);
    }
}

void check_batch_shape(const Batch& batch, const SimilarityClassifier& classifier) {
    batch.validate(classifier.num_classes());
    if (batch.inputs.cols != classifier.input_dim())
        throw std::invalid_argument("batch input width does not match extractor input");
}

LossGrad loss_and_grad_impl(const ParamVector& params, const Batch& batch,
                            const SimilarityClassifier& classifier) {
    check_params(params, classifier);
    check_batch_shape(batch, classifier);
    LayerOffsets off = layer_offsets(classifier.extractor_dims);

    std::size_t b = batch.size();
    std::size_t nblocks = (b + kRowBlock - 1) / kRowBlock;
    std::vector<std::vector<double>> block_grads(nblocks);
    std::vector<double> block_loss(nblocks, 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (nblocks > 1)
#endif
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
        block_grads[blk].assign(params.size(), 0.0);
        std::vector<std::vector<double>> acts;
        std::size_t lo = blk * kRowBlock, hi = std::min(b, lo + kRowBlock);
        for (std::size_t r = lo; r < hi; ++r) {
            block_loss[blk] += row_loss_grad(params.values.data(), classifier.extractor_dims, off,
                                             classifier, batch.inputs.row(r), batch.labels[r],
                                             block_grads[blk].data(), acts);
        }
    }

    LossGrad out;
    out.grad = ParamVector::zeros_like(params);
    double loss = 0.0;
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
        loss += block_loss[blk];
        for (std::size_t i = 0; i < params.size(); ++i) out.grad.values[i] += block_grads[blk][i];
    }
    double inv_b = 1.0 / static_cast<double>(b);
    out.loss = loss * inv_b;
    out.grad.scale(inv_b);
    throw_on_nonfinite(out.grad, out.loss);
    return out;
}

ParamVector finite_diff_grad_impl(const ParamVector& params, const Batch& batch,
                                  const SimilarityClassifier& classifier, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
    check_params(params, classifier);
    check_batch_shape(batch, classifier);
    ParamVector out = ParamVector::zeros_like(params);
    std::size_t n = params.size();

#ifdef _OPENMP
#pragma omp parallel if (n > 1)
#endif
    {
        ParamVector local = params;
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
        for (std::size_t k = 0; k < n; ++k) {
            double old = local.values[k];
            local.values[k] = old + h;
            double lp = loss_only(local, batch, classifier);
            local.values[k] = old - h;
            double lm = loss_only(local, batch, classifier);
            local.values[k] = old;
            out.values[k] = (lp - lm) / (2.0 * h);
        }
    }
    return out;
}

}  // namespace

ParamVector init_params(const SimilarityClassifier& classifier, std::uint64_t seed) {
    const auto& dims = classifier.extractor_dims;
    if (dims.size() < 2) throw std::invalid_argument("init_params: extractor_dims too short");
    ParamVector p;
    p.layout = expected_layout(dims);
    p.values.assign(layout_size(p.layout), 0.0);
    LayerOffsets off = layer_offsets(dims);
    Rng rng(seed);
    for (std::size_t l = 1; l < dims.size(); ++l) {
        double s = std::sqrt(6.0 / static_cast<double>(dims[l - 1] + dims[l]));
        double* w = p.values.data() + off.w_off[l - 1];
        for (std::size_t i = 0; i < dims[l] * dims[l - 1]; ++i) w[i] = rng.uniform(-s, s);
        // biases stay zero
    }
    return p;
}

Matrix extract_features(const ParamVector& params, const Matrix& inputs,
                        const SimilarityClassifier& classifier) {
    check_params(params, classifier);
    if (inputs.cols != classifier.input_dim())
        throw std::invalid_argument("extract_features: input width mismatch");
    LayerOffsets off = layer_offsets(classifier.extractor_dims);
    Matrix out(inputs.rows, classifier.embed_dim());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (inputs.rows > 1)
#endif
    for (std::size_t r = 0; r < inputs.rows; ++r) {
        std::vector<std::vector<double>> acts;
        forward_row(params.values.data(), classifier.extractor_dims, off, inputs.row(r), acts);
        std::copy(acts.back().begin(), acts.back().end(), out.row(r));
    }
    return out;
}

ScoreMatrix cosine_scores(const Matrix& features, const SimilarityClassifier& classifier) {
    if (features.cols != classifier.embed_dim())
        throw std::invalid_argument("cosine_scores: feature width must equal d_embed");
    std::size_t k = classifier.num_classes(), d = features.cols;
    ScoreMatrix out;
    out.scores = Matrix(features.rows, k);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (features.rows > 1)
#endif
    for (std::size_t r = 0; r < features.rows; ++r) {
        const double* v = features.row(r);
        double nraw = 0.0;
        for (std::size_t i = 0; i < d; ++i) nraw += v[i] * v[i];
        double n = std::max(std::sqrt(nraw), classifier.norm_epsilon);
        for (std::size_t j = 0; j < k; ++j) {
            const double* t = classifier.class_embeddings.row(j);
            double dotv = 0.0, tn = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                dotv += v[i] * t[i];
                tn += t[i] * t[i];
            }
            out.scores(r, j) = dotv / (n * std::sqrt(tn));
        }
    }
    return out;
}

CrossEntropyResult cross_entropy_loss(const ScoreMatrix& scores,
                                      const std::vector<std::size_t>& labels, double logit_scale) {
    const Matrix& s = scores.scores;
    if (labels.size() != s.rows) throw std::invalid_argument("cross_entropy_loss: labels mismatch");
    for (double x : s.data)
        if (!std::isfinite(x)) throw std::runtime_error("cross_entropy_loss: non-finite score");
    for (std::size_t l : labels)
        if (l >= s.cols) throw std::invalid_argument("cross_entropy_loss: label out of range");

    CrossEntropyResult out;
    out.probs = Matrix(s.rows, s.cols);
    std::size_t nblocks = (s.rows + kRowBlock - 1) / kRowBlock;
    std::vector<double> block_loss(nblocks, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (nblocks > 1)
#endif
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
        std::size_t lo = blk * kRowBlock, hi = std::min(s.rows, lo + kRowBlock);
        for (std::size_t r = lo; r < hi; ++r)
            block_loss[blk] += row_ce(s.row(r), s.cols, labels[r], logit_scale, out.probs.row(r));
    }
    double loss = 0.0;
    for (double bl : block_loss) loss += bl;
    out.loss = loss / static_cast<double>(s.rows);
    return out;
}

double loss_only(const ParamVector& params, const Batch& batch,
                 const SimilarityClassifier& classifier) {
    check_params(params, classifier);
    LayerOffsets off = layer_offsets(classifier.extractor_dims);
    std::size_t b = batch.size();
    std::size_t nblocks = (b + kRowBlock - 1) / kRowBlock;
    std::vector<std::vector<double>> acts;
    double loss = 0.0;
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
        double bl = 0.0;
        std::size_t lo = blk * kRowBlock, hi = std::min(b, lo + kRowBlock);
        for (std::size_t r = lo; r < hi; ++r)
            bl += row_loss_grad(params.values.data(), classifier.extractor_dims, off, classifier,
                                batch.inputs.row(r), batch.labels[r], nullptr, acts);
        loss += bl;
    }
    return loss / static_cast<double>(b);
}

LossGrad loss_and_grad(const ParamVector& params, const Batch& batch,
                       const SimilarityClassifier& classifier) {
    return loss_and_grad_impl(params, batch, classifier);
}

ParamVector finite_diff_grad(const ParamVector& params, const Batch& batch,
                             const SimilarityClassifier& classifier, double h) {
    return finite_diff_grad_impl(params, batch, classifier, h);
}

namespace ref {

Matrix extract_features(const ParamVector& params, const Matrix& inputs,
                        const SimilarityClassifier& classifier) {
    check_params(params, classifier);
    if (inputs.cols != classifier.input_dim())
        throw std::invalid_argument("extract_features: input width mismatch");
    LayerOffsets off = layer_offsets(classifier.extractor_dims);
    Matrix out(inputs.rows, classifier.embed_dim());
    std::vector<std::vector<double>> acts;
    for (std::size_t r = 0; r < inputs.rows; ++r) {
        forward_row(params.values.data(), classifier.extractor_dims, off, inputs.row(r), acts);
        std::copy(acts.back().begin(), acts.back().end(), out.row(r));
    }
    return out;
}

LossGrad loss_and_grad(const ParamVector& params, const Batch& batch,
                       const SimilarityClassifier& classifier) {
    check_params(params, classifier);
    check_batch_shape(batch, classifier);
    LayerOffsets off = layer_offsets(classifier.extractor_dims);
    std::size_t b = batch.size();
    std::size_t nblocks = (b + kRowBlock - 1) / kRowBlock;

    LossGrad out;
    out.grad = ParamVector::zeros_like(params);
    double loss = 0.0;
    std::vector<double> block_grad(params.size());
    std::vector<std::vector<double>> acts;
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
        block_grad.assign(params.size(), 0.0);
        double bl = 0.0;
        std::size_t lo = blk * kRowBlock, hi = std::min(b, lo + kRowBlock);
        for (std::size_t r = lo; r < hi; ++r)
            bl += row_loss_grad(params.values.data(), classifier.extractor_dims, off, classifier,
                                batch.inputs.row(r), batch.labels[r], block_grad.data(), acts);
        loss += bl;
        for (std::size_t i = 0; i < params.size(); ++i) out.grad.values[i] += block_grad[i];
    }
    double inv_b = 1.0 / static_cast<double>(b);
    out.loss = loss * inv_b;
    out.grad.scale(inv_b);
    throw_on_nonfinite(out.grad, out.loss);
    return out;
}

ParamVector finite_diff_grad(const ParamVector& params, const Batch& batch,
                             const SimilarityClassifier& classifier, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
    check_params(params, classifier);
    check_batch_shape(batch, classifier);
    ParamVector out = ParamVector::zeros_like(params);
    ParamVector local = params;
    for (std::size_t k = 0; k < params.size(); ++k) {
        double old = local.values[k];
        local.values[k] = old + h;
        double lp = loss_only(local, batch, classifier);
        local.values[k] = old - h;
        double lm = loss_only(local, batch, classifier);
        local.values[k] = old;
        out.values[k] = (lp - lm) / (2.0 * h);
    }
    return out;
}

}  // namespace ref

}  // namespace omd
