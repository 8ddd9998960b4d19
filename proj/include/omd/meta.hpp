#pragma once

#include <functional>
#include <vector>

#include "omd/core_math.hpp"

namespace omd {

// Differentiable scalar objective over a ParamVector. The classifier/batch
// objective is the production instance; tests plug in closed-form surrogates.
struct Objective {
    virtual ~Objective() = default;
    virtual LossGrad loss_and_grad(const ParamVector& theta) const = 0;
    virtual double loss(const ParamVector& theta) const { return loss_and_grad(theta).loss; }
};

// Cross-entropy objective of one batch under a fixed classifier.
class BatchObjective final : public Objective {
  public:
    BatchObjective(const Batch& batch, const SimilarityClassifier& classifier)
        : batch_(&batch), classifier_(&classifier) {}
    LossGrad loss_and_grad(const ParamVector& theta) const override {
        return omd::loss_and_grad(theta, *batch_, *classifier_);
    }
    double loss(const ParamVector& theta) const override {
        return loss_only(theta, *batch_, *classifier_);
    }

  private:
    const Batch* batch_;
    const SimilarityClassifier* classifier_;
};

// Support/query pair forming one known-to-open task. Sample ids must be
// disjoint between the two batches.
struct MetaTask {
    Batch support;
    Batch query;

    MetaTask(Batch s, Batch q);
};

struct MetaStepConfig {
    double alpha = 1e-2;        // inner step size
    double beta = 1e-2;         // outer step size
    double delta = 0.5;         // query-gradient weight
    std::size_t tasks_per_step = 4;

    void validate() const;
};

struct InnerUpdateResult {
    ParamVector theta_fast;
    double support_loss = 0.0;
    ParamVector support_grad;
};

// theta_fast = theta - alpha * grad L_S(theta); theta itself is untouched.
InnerUpdateResult inner_update(const ParamVector& theta, const Objective& support, double alpha);
InnerUpdateResult inner_update(const ParamVector& theta, const Batch& support, double alpha,
                               const SimilarityClassifier& classifier);

// Loss and gradient of the query objective evaluated at the fast weights.
LossGrad query_loss(const ParamVector& theta_fast, const Objective& query);
LossGrad query_loss(const ParamVector& theta_fast, const Batch& query,
                    const SimilarityClassifier& classifier);

// L_S(theta) + L_Q(theta - alpha * grad L_S(theta))
double meta_objective(const ParamVector& theta, const Objective& support, const Objective& query,
                      double alpha);
double meta_objective(const ParamVector& theta, const MetaTask& task, double alpha,
                      const SimilarityClassifier& classifier);

// Exact meta-gradient oracle: central finite differences of meta_objective.
// Independent of the analytic backward pass it validates.
ParamVector second_order_meta_grad(const ParamVector& theta, const Objective& support,
                                   const Objective& query, double alpha, double h);
ParamVector second_order_meta_grad(const ParamVector& theta, const MetaTask& task, double alpha,
                                   const SimilarityClassifier& classifier, double h);

struct TaskReport {
    double support_loss = 0.0;
    double query_loss = 0.0;
};

struct StepReport {
    std::vector<TaskReport> tasks;
};

// Decoupled adaptive-moment state for the optional outer-update variant.
struct AdamState {
    ParamVector m;
    ParamVector v;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState like(const ParamVector& theta) {
        return {ParamVector::zeros_like(theta), ParamVector::zeros_like(theta)};
    }
};

// theta <- theta - lr * adam(g); mutates state.
ParamVector adam_update(const ParamVector& theta, const ParamVector& grad, double lr,
                        AdamState& state);

struct FomamlResult {
    ParamVector theta_new;
    StepReport report;
};

// One outer step over N tasks: g = sum_i (support_grad_i + delta * query_grad_i),
// reduced in ascending task order; theta_new = theta - beta * g. Per-task
// inner/query work runs in parallel. Pass adam to use the adaptive variant.
FomamlResult fomaml_step(const ParamVector& theta, const std::vector<MetaTask>& tasks,
                         const MetaStepConfig& cfg, const SimilarityClassifier& classifier,
                         AdamState* adam = nullptr);
FomamlResult fomaml_step(const ParamVector& theta,
                         const std::vector<const Objective*>& supports,
                         const std::vector<const Objective*>& queries, const MetaStepConfig& cfg,
                         AdamState* adam = nullptr);

// Single fine-tuning step, the "plain" baseline.
ParamVector plain_step(const ParamVector& theta, const Batch& batch, double lr,
                       const SimilarityClassifier& classifier);

}  // namespace omd
