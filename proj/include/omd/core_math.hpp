#pragma once

#include <utility>

#include "omd/classifier.hpp"
#include "omd/param_vector.hpp"

namespace omd {

// Rows are accumulated per block, blocks reduced in order. Both the OpenMP
// kernels and the serial reference follow this summation structure, so
// results are bit-identical regardless of thread count.
inline constexpr std::size_t kRowBlock = 8;

// Glorot-uniform weights, zero biases; layout [("W1",[d1,d0]),("b1",[d1]),...].
ParamVector init_params(const SimilarityClassifier& classifier, std::uint64_t seed);

// Forward pass: tanh hidden layers, affine output.
Matrix extract_features(const ParamVector& params, const Matrix& inputs,
                        const SimilarityClassifier& classifier);

// scores[i][j] = <v_i, t_j> / (max(||v_i||, eps) * ||t_j||)
ScoreMatrix cosine_scores(const Matrix& features, const SimilarityClassifier& classifier);

struct CrossEntropyResult {
    double loss = 0.0;
    Matrix probs; // B x K, rows sum to 1
};

// Mean softmax cross entropy over the batch at temperature logit_scale.
CrossEntropyResult cross_entropy_loss(const ScoreMatrix& scores,
                                      const std::vector<std::size_t>& labels, double logit_scale);

struct LossGrad {
    double loss = 0.0;
    ParamVector grad;
};

// Analytic reverse-mode gradient of extract_features -> cosine_scores ->
// cross_entropy_loss.
LossGrad loss_and_grad(const ParamVector& params, const Batch& batch,
                       const SimilarityClassifier& classifier);

// Loss only (forward pass), same summation order as loss_and_grad.
double loss_only(const ParamVector& params, const Batch& batch,
                 const SimilarityClassifier& classifier);

// Central-difference gradient oracle, one coordinate at a time.
ParamVector finite_diff_grad(const ParamVector& params, const Batch& batch,
                             const SimilarityClassifier& classifier, double h);

// Serial reference implementations of the parallel kernels above. Same
// canonical summation order, no OpenMP; kept for bitwise comparison tests
// and the benchmark.
namespace ref {
Matrix extract_features(const ParamVector& params, const Matrix& inputs,
                        const SimilarityClassifier& classifier);
LossGrad loss_and_grad(const ParamVector& params, const Batch& batch,
                       const SimilarityClassifier& classifier);
ParamVector finite_diff_grad(const ParamVector& params, const Batch& batch,
                             const SimilarityClassifier& classifier, double h);
}  // namespace ref

}  // namespace omd
