#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace omd {

// Minimal row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    const double* row(std::size_t i) const { return data.data() + i * cols; }
    double* row(std::size_t i) { return data.data() + i * cols; }

    bool operator==(const Matrix&) const = default;
};

// Frozen class-embedding table plus the feature-extractor architecture.
// Embedding rows are expected unit-norm; validate() enforces it.
struct SimilarityClassifier {
    Matrix class_embeddings;                 // K x d_embed
    std::vector<std::size_t> extractor_dims; // input d_x, hidden widths..., output d_embed
    double logit_scale = 10.0;
    double norm_epsilon = 1e-12;

    std::size_t num_classes() const { return class_embeddings.rows; }
    std::size_t embed_dim() const { return class_embeddings.cols; }
    std::size_t input_dim() const { return extractor_dims.empty() ? 0 : extractor_dims.front(); }

    void validate() const;
};

struct Batch {
    Matrix inputs;                        // B x d_x
    std::vector<std::size_t> labels;      // in [0, K)
    std::vector<std::int64_t> sample_ids; // pairwise distinct

    std::size_t size() const { return inputs.rows; }
    void validate(std::size_t num_classes) const;
};

struct ScoreMatrix {
    Matrix scores; // B x K cosine similarities
};

}  // namespace omd
