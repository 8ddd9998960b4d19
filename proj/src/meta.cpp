#include "omd/meta.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace omd {

MetaTask::MetaTask(Batch s, Batch q) : support(std::move(s)), query(std::move(q)) {
    std::set<std::int64_t> ids(support.sample_ids.begin(), support.sample_ids.end());
    for (std::int64_t id : query.sample_ids)
        if (ids.count(id)) throw std::invalid_argument("MetaTask: support and query overlap");
}

void MetaStepConfig::validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("MetaStepConfig: alpha must be > 0");
    if (!(beta > 0.0)) throw std::invalid_argument("MetaStepConfig: beta must be > 0");
    if (delta < 0.0) throw std::invalid_argument("MetaStepConfig: delta must be >= 0");
    if (tasks_per_step < 1) throw std::invalid_argument("MetaStepConfig: tasks_per_step must be >= 1");
}

InnerUpdateResult inner_update(const ParamVector& theta, const Objective& support, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("inner_update: alpha must be >= 0");
    LossGrad lg = support.loss_and_grad(theta);
    InnerUpdateResult out;
    out.theta_fast = theta;
    out.theta_fast.add_scaled(lg.grad, -alpha);
    out.support_loss = lg.loss;
    out.support_grad = std::move(lg.grad);
    return out;
}

InnerUpdateResult inner_update(const ParamVector& theta, const Batch& support, double alpha,
                               const SimilarityClassifier& classifier) {
    BatchObjective obj(support, classifier);
    return inner_update(theta, obj, alpha);
}

LossGrad query_loss(const ParamVector& theta_fast, const Objective& query) {
    return query.loss_and_grad(theta_fast);
}

LossGrad query_loss(const ParamVector& theta_fast, const Batch& query,
                    const SimilarityClassifier& classifier) {
    BatchObjective obj(query, classifier);
    return query_loss(theta_fast, obj);
}

double meta_objective(const ParamVector& theta, const Objective& support, const Objective& query,
                      double alpha) {
    LossGrad lg = support.loss_and_grad(theta);
    ParamVector fast = theta;
    fast.add_scaled(lg.grad, -alpha);
    return lg.loss + query.loss(fast);
}

double meta_objective(const ParamVector& theta, const MetaTask& task, double alpha,
                      const SimilarityClassifier& classifier) {
    BatchObjective s(task.support, classifier), q(task.query, classifier);
    return meta_objective(theta, s, q, alpha);
}

ParamVector second_order_meta_grad(const ParamVector& theta, const Objective& support,
                                   const Objective& query, double alpha, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("second_order_meta_grad: h must be > 0");
    ParamVector out = ParamVector::zeros_like(theta);
    std::size_t n = theta.size();
#ifdef _OPENMP
#pragma omp parallel if (n > 1)
#endif
    {
        ParamVector local = theta;
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
        for (std::size_t k = 0; k < n; ++k) {
            double old = local.values[k];
            local.values[k] = old + h;
            double lp = meta_objective(local, support, query, alpha);
            local.values[k] = old - h;
            double lm = meta_objective(local, support, query, alpha);
            local.values[k] = old;
            out.values[k] = (lp - lm) / (2.0 * h);
        }
    }
    return out;
}

ParamVector second_order_meta_grad(const ParamVector& theta, const MetaTask& task, double alpha,
                                   const SimilarityClassifier& classifier, double h) {
    BatchObjective s(task.support, classifier), q(task.query, classifier);
    return second_order_meta_grad(theta, s, q, alpha, h);
}

ParamVector adam_update(const ParamVector& theta, const ParamVector& grad, double lr,
                        AdamState& state) {
    theta.check_layout(grad);
    state.m.check_layout(grad);
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    ParamVector out = theta;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        double g = grad.values[i];
        state.m.values[i] = state.beta1 * state.m.values[i] + (1.0 - state.beta1) * g;
        state.v.values[i] = state.beta2 * state.v.values[i] + (1.0 - state.beta2) * g * g;
        double mhat = state.m.values[i] / bc1;
        double vhat = state.v.values[i] / bc2;
        out.values[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    return out;
}

FomamlResult fomaml_step(const ParamVector& theta,
                         const std::vector<const Objective*>& supports,
                         const std::vector<const Objective*>& queries, const MetaStepConfig& cfg,
                         AdamState* adam) {
    cfg.validate();
    if (supports.empty()) throw std::invalid_argument("fomaml_step: empty task list");
    if (supports.size() != queries.size())
        throw std::invalid_argument("fomaml_step: support/query count mismatch");

    std::size_t n = supports.size();
    std::vector<ParamVector> task_grads(n);
    std::vector<TaskReport> reports(n);

    // tasks are independent; the reduction below stays in ascending order
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 1)
#endif
    for (std::size_t i = 0; i < n; ++i) {
        InnerUpdateResult inner = inner_update(theta, *supports[i], cfg.alpha);
        LossGrad q = query_loss(inner.theta_fast, *queries[i]);
        reports[i] = {inner.support_loss, q.loss};
        task_grads[i] = std::move(inner.support_grad);
        task_grads[i].add_scaled(q.grad, cfg.delta);
    }

    ParamVector g = ParamVector::zeros_like(theta);
    for (std::size_t i = 0; i < n; ++i) g.add_scaled(task_grads[i], 1.0);

    FomamlResult out;
    if (adam) {
        out.theta_new = adam_update(theta, g, cfg.beta, *adam);
    } else {
        out.theta_new = theta;
        out.theta_new.add_scaled(g, -cfg.beta);
    }
    out.report.tasks = std::move(reports);
    return out;
}

FomamlResult fomaml_step(const ParamVector& theta, const std::vector<MetaTask>& tasks,
                         const MetaStepConfig& cfg, const SimilarityClassifier& classifier,
                         AdamState* adam) {
    std::vector<BatchObjective> objs;
    objs.reserve(tasks.size() * 2);
    std::vector<const Objective*> supports, queries;
    for (const auto& t : tasks) {
        objs.emplace_back(t.support, classifier);
        objs.emplace_back(t.query, classifier);
    }
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        supports.push_back(&objs[2 * i]);
        queries.push_back(&objs[2 * i + 1]);
    }
    return fomaml_step(theta, supports, queries, cfg, adam);
}

ParamVector plain_step(const ParamVector& theta, const Batch& batch, double lr,
                       const SimilarityClassifier& classifier) {
    if (lr < 0.0) throw std::invalid_argument("plain_step: lr must be >= 0");
    LossGrad lg = loss_and_grad(theta, batch, classifier);
    ParamVector out = theta;
    out.add_scaled(lg.grad, -lr);
    return out;
}

}  // namespace omd
