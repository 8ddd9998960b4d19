#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "omd/dataset_io.hpp"
#include "omd/harness.hpp"
#include "support.hpp"

using namespace omd;

namespace {

DatasetSpec tiny_spec() {
    DatasetSpec spec;
    spec.k_base = 4;
    spec.k_novel = 4;
    spec.d_embed = 4;
    spec.d_motion = 4;
    spec.d_static = 4;
    spec.n_contexts = 4;
    spec.bias_rho = 0.9;
    spec.noise_sigma = 0.1;
    spec.samples_per_class_train = 24;
    spec.samples_per_class_test = 12;
    spec.seed = 7;
    return spec;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.dataset_spec = tiny_spec();
    cfg.extractor_dims = {8, 6, 4};
    cfg.meta.alpha = 0.05;
    cfg.meta.beta = 0.02;
    cfg.meta.delta = 1.0;
    cfg.meta.tasks_per_step = 2;
    cfg.epochs = 3;
    cfg.warmup_epochs = 1;
    cfg.batch_size = 8;
    cfg.model_seed = 11;
    cfg.sampler_seed = 12;
    return cfg;
}

}  // namespace

TEST_CASE("cosine schedule endpoints and midpoint") {
    CosineSchedule sch{1e-2, 1e-4, 100};
    CHECK(sch.at(0) == doctest::Approx(1e-2).epsilon(1e-12));
    CHECK(sch.at(100) == doctest::Approx(1e-4).epsilon(1e-12));
    // halfway: final + 0.5 * (init - final)
    CHECK(sch.at(50) == doctest::Approx(1e-4 + 0.5 * (1e-2 - 1e-4)).epsilon(1e-12));
    for (std::size_t s = 1; s <= 100; ++s) CHECK(sch.at(s) < sch.at(s - 1)); // monotone
}

TEST_CASE("harmonic mean of base/novel accuracy rows") {
    CHECK(harmonic_mean({83.9, 33.5, 64.5}) == doctest::Approx(52.4).epsilon(0.05 / 52.4));
    CHECK(harmonic_mean({81.5, 46.6}) == doctest::Approx(59.3).epsilon(0.05 / 59.3));
    CHECK(harmonic_mean({4.0, 4.0, 4.0}) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK_THROWS_AS(harmonic_mean({}), std::invalid_argument);
    CHECK_THROWS_AS(harmonic_mean({1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("prediction ensemble blends score matrices") {
    ScoreMatrix a{Matrix(1, 2)}, b{Matrix(1, 2)};
    a.scores(0, 0) = 1.0;
    a.scores(0, 1) = 3.0;
    b.scores(0, 0) = 5.0;
    b.scores(0, 1) = 7.0;
    ScoreMatrix m = prediction_ensemble(a, b, 0.25);
    CHECK(m.scores(0, 0) == doctest::Approx(0.25 * 1.0 + 0.75 * 5.0).epsilon(1e-12));
    CHECK(m.scores(0, 1) == doctest::Approx(0.25 * 3.0 + 0.75 * 7.0).epsilon(1e-12));
    ScoreMatrix bad{Matrix(2, 2)};
    CHECK_THROWS_AS(prediction_ensemble(a, bad, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(prediction_ensemble(a, b, 1.5), std::invalid_argument);
}

TEST_CASE("evaluate: singleton subset, top-5 dominance, chance level") {
    Rng rng(31);
    SyntheticDataset ds = generate_dataset(tiny_spec());
    SimilarityClassifier cls = make_classifier(ds, {8, 6, 4}, 10.0);
    ParamVector theta = init_params(cls, 5);
    BaseNovelSplit bn = split_base_novel(ds);

    const Split& ic = ds.splits.at("test_base_ic");
    // restrict to a single class: every sample of that class is trivially right
    EvalReport one = evaluate(theta, cls, ic, {bn.base[0]});
    CHECK(one.top1 == doctest::Approx(1.0));
    CHECK(one.n == 12); // only samples whose label is in the subset count

    EvalReport full = evaluate(theta, cls, ic, bn.base);
    CHECK(full.top5 >= full.top1);
    CHECK(full.top1 >= 0.0);
    CHECK(full.top1 <= 1.0);
    CHECK(std::isfinite(full.mean_loss));

    // random unit embeddings + random extractor stay near chance on 4 classes
    double n = static_cast<double>(full.n);
    CHECK(std::abs(full.top1 - 0.25) <= 3.0 / std::sqrt(n) + 0.25);

    CHECK_THROWS_AS(evaluate(theta, cls, ic, {}), std::invalid_argument);
}

TEST_CASE("evaluate is deterministic and subset-consistent") {
    SyntheticDataset ds = generate_dataset(tiny_spec());
    SimilarityClassifier cls = make_classifier(ds, {8, 6, 4}, 10.0);
    ParamVector theta = init_params(cls, 5);
    BaseNovelSplit bn = split_base_novel(ds);
    const Split& split = ds.splits.at("test_novel_ic");
    EvalReport a = evaluate(theta, cls, split, bn.novel);
    EvalReport b = evaluate(theta, cls, split, bn.novel);
    CHECK(a.top1 == b.top1);
    CHECK(a.mean_loss == b.mean_loss);
    // base subset on a novel split: no label belongs -> n == 0
    CHECK(evaluate(theta, cls, split, bn.base).n == 0);
}

TEST_CASE("checkpoint round trip, digest check and corruption") {
    Rng rng(77);
    auto inst = test::random_instance(rng);
    const std::string path = "test_ckpt.omd1";
    CheckpointMeta meta{3, 0xdeadbeefULL};
    save_checkpoint(path, inst.theta, meta);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.theta == inst.theta); // bitwise
    CHECK(back.meta.epoch == 3);
    CHECK(back.meta.config_digest == 0xdeadbeefULL);

    Layout expect = inst.theta.layout;
    CHECK_NOTHROW(load_checkpoint(path, &expect, &meta.config_digest));
    std::uint64_t wrong = 1;
    CHECK_THROWS_AS(load_checkpoint(path, nullptr, &wrong), std::runtime_error);
    Layout other = {{"x", {1}}};
    CHECK_THROWS_AS(load_checkpoint(path, &other, nullptr), std::runtime_error);

    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4); // clobber the magic
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("train config parsing: strict keys, invariants, digest") {
    std::string text = R"({
        "dataset_spec": {"k_base": 4, "k_novel": 4, "d_embed": 4, "d_motion": 4,
                          "d_static": 4, "n_contexts": 4, "bias_rho": 0.9,
                          "noise_sigma": 0.1, "samples_per_class_train": 24,
                          "samples_per_class_test": 12, "seed": 7},
        "extractor_dims": [8, 6, 4],
        "meta": {"alpha": 0.05, "beta": 0.02, "delta": 1.0, "tasks_per_step": 2},
        "epochs": 3,
        "warmup_epochs": 1,
        "batch_size": 8,
        "seeds": {"model": 11, "sampler": 12}
    })";
    TrainConfig cfg = parse_train_config(text);
    CHECK(cfg.epochs == 3);
    CHECK(cfg.meta.alpha == 0.05);
    CHECK(cfg.model_seed == 11);
    CHECK(cfg.dataset_spec.has_value());
    CHECK_NOTHROW(cfg.validate());

    // digest insensitive to whitespace, sensitive to values
    std::string spaced = text;
    spaced.insert(spaced.find('{') + 1, "\n\n    ");
    CHECK(config_digest(text) == config_digest(spaced));
    std::string changed = text;
    changed.replace(changed.find("\"epochs\": 3"), 11, "\"epochs\": 4");
    CHECK(config_digest(text) != config_digest(changed));

    std::string unknown = text;
    unknown.insert(unknown.rfind('}'), ", \"typo_key\": 1");
    CHECK_THROWS_AS(parse_train_config(unknown), std::invalid_argument);

    TrainConfig bad = cfg;
    bad.warmup_epochs = 5; // exceeds epochs
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.dataset_path = "x";
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument); // both sources set
    bad = cfg;
    bad.optimizer = "lbfgs";
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("train: determinism, metrics shape, gwa toggle") {
    TrainConfig cfg = tiny_config();
    SyntheticDataset ds = generate_dataset(*cfg.dataset_spec);
    TrainResult a = train(cfg, &ds);
    TrainResult b = train(cfg, &ds);
    CHECK(a.final_theta == b.final_theta); // bitwise
    CHECK(a.gwa_theta == b.gwa_theta);
    CHECK(a.metrics_csv == b.metrics_csv);
    CHECK(a.trajectory.size() == cfg.epochs);
    CHECK(a.final_theta.all_finite());
    CHECK(a.metrics_csv.find("test_novel_ooc") != std::string::npos);
    CHECK(a.metrics_csv.rfind("epoch,step,split,metric,value", 0) == 0);

    // gwa equals the direct gaussian average of the trajectory
    double mu = std::ceil(0.6 * static_cast<double>(cfg.epochs));
    ParamVector direct = test::direct_gaussian_average(a.trajectory, mu, cfg.gwa.sigma2);
    double rel = (a.gwa_theta - direct).norm() / direct.norm();
    CHECK(rel < 1e-10);

    TrainConfig off = cfg;
    off.gwa.enabled = false;
    TrainResult c = train(off, &ds);
    CHECK(c.gwa_theta == c.final_theta);

    // excluding warm-up changes the average but not the endpoint
    TrainConfig skip = cfg;
    skip.gwa.include_warmup = false;
    TrainResult d = train(skip, &ds);
    CHECK(d.final_theta == a.final_theta);
    CHECK(d.gwa_theta.values != a.gwa_theta.values);
}

TEST_CASE("train degenerate shapes: warmup-only and single epoch") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 1;
    cfg.warmup_epochs = 1; // all warm-up, no meta steps
    SyntheticDataset ds = generate_dataset(*cfg.dataset_spec);
    TrainResult r = train(cfg, &ds);
    CHECK(r.trajectory.size() == 1);
    CHECK(r.final_theta.all_finite());

    cfg.warmup_epochs = 0;
    cfg.epochs = 1;
    TrainResult m = train(cfg, &ds);
    CHECK(m.final_theta.all_finite());
    CHECK(m.final_theta.values != init_params(make_classifier(ds, cfg.extractor_dims, 10.0),
                                              cfg.model_seed)
                                      .values);
}

TEST_CASE("train with cosine schedule and adam stays finite") {
    TrainConfig cfg = tiny_config();
    cfg.has_schedule = true;
    cfg.alpha_final = 1e-4;
    cfg.beta_final = 1e-4;
    TrainResult r = train(cfg);
    CHECK(r.final_theta.all_finite());

    cfg.optimizer = "adam";
    TrainResult ad = train(cfg);
    CHECK(ad.final_theta.all_finite());
    CHECK(ad.final_theta.values != r.final_theta.values);
}

TEST_CASE("training reduces in-context loss on the tiny benchmark") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 6;
    cfg.warmup_epochs = 2;
    SyntheticDataset ds = generate_dataset(*cfg.dataset_spec);
    SimilarityClassifier cls = make_classifier(ds, cfg.extractor_dims, cfg.logit_scale);
    ParamVector theta0 = init_params(cls, cfg.model_seed);
    BaseNovelSplit bn = split_base_novel(ds);
    const Split& ic = ds.splits.at("test_base_ic");

    TrainResult r = train(cfg, &ds);
    EvalReport before = evaluate(theta0, cls, ic, bn.base);
    EvalReport after = evaluate(r.final_theta, cls, ic, bn.base);
    CHECK(after.mean_loss < before.mean_loss);
    CHECK(after.top1 > before.top1);
}
