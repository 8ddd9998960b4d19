#include <doctest.h>

#include <cmath>

#include "omd/meta.hpp"
#include "support.hpp"

using namespace omd;
using test::QuadraticObjective;
using test::scalar_param;

// surrogates used throughout: L_S = 0.5 c ||theta||^2, L_Q = 0.5 ||theta - 1||^2

TEST_CASE("inner_update on surrogates") {
    // L(theta) = theta^2 (c = 2), theta = 2, alpha = 0.5 -> 0
    QuadraticObjective ls(scalar_param(0.0), 2.0);
    auto r = inner_update(scalar_param(2.0), ls, 0.5);
    CHECK(r.theta_fast.values[0] == doctest::Approx(0.0));
    CHECK(r.support_loss == doctest::Approx(4.0));
    CHECK(r.support_grad.values[0] == doctest::Approx(4.0));

    // alpha = 0 -> unchanged, bitwise
    auto r0 = inner_update(scalar_param(2.0), ls, 0.0);
    CHECK(r0.theta_fast.values[0] == 2.0);

    // stationary point -> unchanged
    auto rs = inner_update(scalar_param(0.0), ls, 0.3);
    CHECK(rs.theta_fast.values[0] == 0.0);
}

TEST_CASE("inner_update leaves theta untouched") {
    Rng rng(12);
    auto inst = test::random_instance(rng);
    ParamVector before = inst.theta;
    auto r = inner_update(inst.theta, inst.batch, 0.1, inst.cls);
    CHECK(inst.theta == before);
    CHECK(r.theta_fast.values != before.values);
}

TEST_CASE("query_loss on surrogate") {
    // L_Q = 0.5 (theta - 1)^2 at theta = 0.9 -> loss 0.005, grad -0.1
    QuadraticObjective lq(scalar_param(1.0));
    auto r = query_loss(scalar_param(0.9), lq);
    CHECK(r.loss == doctest::Approx(0.005).epsilon(1e-12));
    CHECK(r.grad.values[0] == doctest::Approx(-0.1).epsilon(1e-12));

    // at the minimizer the gradient vanishes
    auto rmin = query_loss(scalar_param(1.0), lq);
    CHECK(std::abs(rmin.grad.values[0]) < 1e-8);
}

TEST_CASE("meta_objective closed form") {
    QuadraticObjective ls(scalar_param(0.0)), lq(scalar_param(1.0));
    // theta=1, alpha=0.1: 0.5 + 0.5*(0.9-1)^2 = 0.505
    CHECK(meta_objective(scalar_param(1.0), ls, lq, 0.1) == doctest::Approx(0.505).epsilon(1e-12));
    // alpha=0 -> L_S + L_Q
    CHECK(meta_objective(scalar_param(1.0), ls, lq, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::isfinite(meta_objective(scalar_param(-3.7), ls, lq, 0.05)));
}

TEST_CASE("second_order_meta_grad closed form and degenerate alpha") {
    QuadraticObjective ls(scalar_param(0.0)), lq(scalar_param(1.0));
    // d/dtheta [0.5 theta^2 + 0.5((1-a)theta - 1)^2] = theta + (1-a)((1-a)theta - 1)
    ParamVector g = second_order_meta_grad(scalar_param(1.0), ls, lq, 0.1, 1e-6);
    CHECK(g.values[0] == doctest::Approx(0.91).epsilon(1e-7));

    // alpha = 0 -> grad L_S + grad L_Q
    ParamVector g0 = second_order_meta_grad(scalar_param(1.0), ls, lq, 0.0, 1e-6);
    CHECK(g0.values[0] == doctest::Approx(1.0 + 0.0).epsilon(1e-6));

    CHECK_THROWS_AS(second_order_meta_grad(scalar_param(1.0), ls, lq, 0.1, 0.0),
                    std::invalid_argument);
}

TEST_CASE("first-order gradient vs exact meta-gradient on the quadratic") {
    QuadraticObjective ls(scalar_param(0.0)), lq(scalar_param(1.0));
    double alpha = 0.1;
    auto inner = inner_update(scalar_param(1.0), ls, alpha);
    auto q = query_loss(inner.theta_fast, lq);
    double g_fo = inner.support_grad.values[0] + q.grad.values[0];
    CHECK(g_fo == doctest::Approx(0.90).epsilon(1e-12));
    ParamVector g_exact = second_order_meta_grad(scalar_param(1.0), ls, lq, alpha, 1e-6);
    // dropped curvature term is alpha * |H * grad L_Q| = 0.1 * 0.1 = 0.01
    CHECK(g_exact.values[0] - g_fo == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("first-order fidelity improves as alpha shrinks (random classifier)") {
    Rng rng(2025);
    SimilarityClassifier cls;
    cls.extractor_dims = {3, 4, 2}; // 3*4+4 + 4*2+2 = 26 params
    cls.class_embeddings = test::random_unit_rows(3, 2, rng);
    ParamVector theta = init_params(cls, 5);

    Batch support, query;
    support.inputs = Matrix(4, 3);
    query.inputs = Matrix(4, 3);
    for (double& v : support.inputs.data) v = rng.normal();
    for (double& v : query.inputs.data) v = rng.normal();
    for (std::size_t i = 0; i < 4; ++i) {
        support.labels.push_back(rng.bounded(3));
        support.sample_ids.push_back(static_cast<std::int64_t>(i));
        query.labels.push_back(rng.bounded(3));
        query.sample_ids.push_back(static_cast<std::int64_t>(100 + i));
    }
    MetaTask task(support, query);

    double prev = -1.0;
    for (double alpha : {1e-1, 1e-2, 1e-3, 1e-4}) {
        auto inner = inner_update(theta, task.support, alpha, cls);
        auto q = query_loss(inner.theta_fast, task.query, cls);
        ParamVector g_fo = inner.support_grad;
        g_fo.add_scaled(q.grad, 1.0);
        ParamVector g_exact = second_order_meta_grad(theta, task, alpha, cls, 1e-6);
        double cos = test::cosine_between(g_fo, g_exact);
        CHECK(cos >= prev - 1e-12);
        prev = cos;
    }
    CHECK(prev > 0.999);
}

TEST_CASE("fomaml_step quadratic example and copy semantics") {
    QuadraticObjective ls(scalar_param(0.0)), lq(scalar_param(1.0));
    MetaStepConfig cfg{0.1, 0.1, 1.0, 1};
    ParamVector theta = scalar_param(1.0);
    ParamVector before = theta;
    auto res = fomaml_step(theta, {&ls}, {&lq}, cfg);
    // 1 - 0.1 * (1 + 1 * (-0.1)) = 0.91
    CHECK(res.theta_new.values[0] == doctest::Approx(0.91).epsilon(1e-12));
    CHECK(theta == before);
    REQUIRE(res.report.tasks.size() == 1);
    CHECK(res.report.tasks[0].support_loss == doctest::Approx(0.5));
    CHECK(res.report.tasks[0].query_loss == doctest::Approx(0.005));
}

TEST_CASE("fomaml_step: two identical tasks double the update") {
    QuadraticObjective ls(scalar_param(0.0)), lq(scalar_param(1.0));
    MetaStepConfig cfg1{0.1, 0.1, 1.0, 1};
    auto r1 = fomaml_step(scalar_param(1.0), {&ls}, {&lq}, cfg1);
    MetaStepConfig cfg2{0.1, 0.1, 1.0, 2};
    auto r2 = fomaml_step(scalar_param(1.0), {&ls, &ls}, {&lq, &lq}, cfg2);
    double step1 = 1.0 - r1.theta_new.values[0];
    double step2 = 1.0 - r2.theta_new.values[0];
    CHECK(step2 == doctest::Approx(2.0 * step1).epsilon(1e-12));
}

TEST_CASE("fomaml_step delta=0 bitwise equals accumulated plain updates") {
    Rng rng(404);
    for (int trial = 0; trial < 20; ++trial) {
        auto inst = test::random_instance(rng);
        // build 3 disjoint tasks from fresh random batches
        std::vector<MetaTask> tasks;
        std::int64_t next_id = 1000;
        for (int t = 0; t < 3; ++t) {
            Batch s, q;
            std::size_t b = 4;
            s.inputs = Matrix(b, inst.batch.inputs.cols);
            q.inputs = Matrix(b, inst.batch.inputs.cols);
            for (double& v : s.inputs.data) v = rng.normal();
            for (double& v : q.inputs.data) v = rng.normal();
            for (std::size_t i = 0; i < b; ++i) {
                s.labels.push_back(rng.bounded(inst.cls.num_classes()));
                q.labels.push_back(rng.bounded(inst.cls.num_classes()));
                s.sample_ids.push_back(next_id++);
                q.sample_ids.push_back(next_id++);
            }
            tasks.emplace_back(s, q);
        }
        double beta = 0.05;
        MetaStepConfig cfg{0.1, beta, 0.0, 3};
        auto res = fomaml_step(inst.theta, tasks, cfg, inst.cls);

        ParamVector acc = ParamVector::zeros_like(inst.theta);
        for (const auto& t : tasks)
            acc.add_scaled(loss_and_grad(inst.theta, t.support, inst.cls).grad, 1.0);
        ParamVector expect = inst.theta;
        expect.add_scaled(acc, -beta);
        CHECK(res.theta_new == expect);
    }
}

TEST_CASE("fomaml_step determinism and error paths") {
    QuadraticObjective ls(scalar_param(0.0)), lq(scalar_param(1.0));
    MetaStepConfig cfg{0.1, 0.1, 0.5, 1};
    auto a = fomaml_step(scalar_param(1.0), {&ls}, {&lq}, cfg);
    auto b = fomaml_step(scalar_param(1.0), {&ls}, {&lq}, cfg);
    CHECK(a.theta_new == b.theta_new);
    CHECK_THROWS_AS(fomaml_step(scalar_param(1.0), {}, {}, cfg), std::invalid_argument);
}

TEST_CASE("MetaTask rejects overlapping sample ids") {
    Batch s, q;
    s.inputs = Matrix(1, 1);
    q.inputs = Matrix(1, 1);
    s.labels = {0};
    q.labels = {0};
    s.sample_ids = {7};
    q.sample_ids = {7};
    CHECK_THROWS_AS(MetaTask(s, q), std::invalid_argument);
    q.sample_ids = {8};
    CHECK_NOTHROW(MetaTask(s, q));
}

TEST_CASE("plain_step basics and descent") {
    Rng rng(555);
    auto inst = test::random_instance(rng);
    // lr = 0 -> unchanged
    CHECK(plain_step(inst.theta, inst.batch, 0.0, inst.cls) == inst.theta);
    // equals inner_update's fast weights at alpha = lr
    auto fast = inner_update(inst.theta, inst.batch, 0.05, inst.cls).theta_fast;
    CHECK(plain_step(inst.theta, inst.batch, 0.05, inst.cls) == fast);

    // loss decreases for small lr across seeded draws
    for (int trial = 0; trial < 50; ++trial) {
        auto i2 = test::random_instance(rng);
        double before = loss_only(i2.theta, i2.batch, i2.cls);
        ParamVector after = plain_step(i2.theta, i2.batch, 1e-3, i2.cls);
        CHECK(loss_only(after, i2.batch, i2.cls) < before);
    }
}

TEST_CASE("adam_update moves against the gradient") {
    ParamVector theta = scalar_param(1.0);
    AdamState st = AdamState::like(theta);
    ParamVector g = scalar_param(2.0);
    ParamVector out = adam_update(theta, g, 0.1, st);
    CHECK(out.values[0] < 1.0);
    CHECK(st.step == 1);
}
