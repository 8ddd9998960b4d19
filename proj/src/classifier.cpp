#include "omd/classifier.hpp"

#include <cmath>
#include <set>
#include <string>

namespace omd {

void SimilarityClassifier::validate() const {
    if (class_embeddings.rows < 2) throw std::invalid_argument("classifier: K must be >= 2");
    if (class_embeddings.cols < 1) throw std::invalid_argument("classifier: d_embed must be >= 1");
    if (!(logit_scale > 0.0)) throw std::invalid_argument("classifier: logit_scale must be > 0");
    if (!(norm_epsilon > 0.0)) throw std::invalid_argument("classifier: norm_epsilon must be > 0");
    if (extractor_dims.size() < 2)
        throw std::invalid_argument("classifier: extractor_dims needs input and output widths");
    if (extractor_dims.back() != class_embeddings.cols)
        throw std::invalid_argument("classifier: extractor output width must equal d_embed");
    for (std::size_t i = 0; i < class_embeddings.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < class_embeddings.cols; ++j) {
            double v = class_embeddings(i, j);
            s += v * v;
        }
        if (std::abs(std::sqrt(s) - 1.0) > 1e-9)
            throw std::invalid_argument("classifier: class embedding row " + std::to_string(i) +
                                        " is not unit norm");
    }
}

void Batch::validate(std::size_t num_classes) const {
    if (inputs.rows < 1) throw std::invalid_argument("batch: must contain at least one sample");
    if (labels.size() != inputs.rows || sample_ids.size() != inputs.rows)
        throw std::invalid_argument("batch: labels/sample_ids length mismatch");
    for (std::size_t l : labels)
        if (l >= num_classes) throw std::invalid_argument("batch: label out of range");
    std::set<std::int64_t> seen(sample_ids.begin(), sample_ids.end());
    if (seen.size() != sample_ids.size())
        throw std::invalid_argument("batch: duplicate sample_ids");
}

}  // namespace omd
