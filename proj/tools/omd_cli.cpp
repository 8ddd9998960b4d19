// Command-line interface: dataset generation, training, evaluation, weight
// averaging and the gradient self-check.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "omd/checkpoint.hpp"
#include "omd/core_math.hpp"
#include "omd/dataset_io.hpp"
#include "omd/gwa.hpp"
#include "omd/harness.hpp"
#include "omd/rng.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir) {
    omd::DatasetSpec spec = omd::spec_from_json(read_file(spec_path));
    omd::SyntheticDataset ds = omd::generate_dataset(spec);
    omd::export_dataset(ds, out_dir);
    std::size_t total = 0;
    for (const auto& [name, split] : ds.splits) total += split.size();
    std::cout << "wrote " << ds.splits.size() << " splits (" << total << " samples) to " << out_dir
              << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    std::string text = read_file(config_path);
    omd::TrainConfig cfg = omd::parse_train_config(text);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (cfg.output_dir.empty())
        throw std::runtime_error("no output directory: pass --out or set output_dir in the config");
    omd::TrainResult res = omd::train(cfg, nullptr, omd::config_digest(text));
    (void)res;
    std::cout << "trained " << cfg.epochs << " epochs; metrics and checkpoints in "
              << cfg.output_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& split,
             const std::string& classes) {
    omd::SyntheticDataset ds = omd::import_dataset(data_dir);
    auto it = ds.splits.find(split);
    if (it == ds.splits.end()) throw std::runtime_error("unknown split '" + split + "'");
    omd::Checkpoint ckpt = omd::load_checkpoint(ckpt_path);

    // recover the extractor widths from the checkpoint layout
    std::vector<std::size_t> dims;
    for (const auto& seg : ckpt.theta.layout)
        if (seg.shape.size() == 2) {
            if (dims.empty()) dims.push_back(seg.shape[1]);
            dims.push_back(seg.shape[0]);
        }
    omd::SimilarityClassifier cls = omd::make_classifier(ds, dims, 10.0);

    omd::BaseNovelSplit bn = omd::split_base_novel(ds);
    std::vector<std::size_t> subset;
    if (classes == "base") subset = bn.base;
    else if (classes == "novel") subset = bn.novel;
    else if (classes == "all") {
        subset = bn.base;
        subset.insert(subset.end(), bn.novel.begin(), bn.novel.end());
    } else {
        throw std::runtime_error("--classes must be base, novel or all");
    }

    omd::EvalReport rep = omd::evaluate(ckpt.theta, cls, it->second, subset, split);
    std::printf("split=%s classes=%s n=%zu top1=%.4f top5=%.4f loss=%.6f\n", split.c_str(),
                classes.c_str(), rep.n, rep.top1, rep.top5, rep.mean_loss);
    return 0;
}

int cmd_avg(const std::string& scheme, double mu, double sigma2, double decay,
            const std::string& in_dir, const std::string& out_file) {
    // epoch checkpoints in ascending epoch order
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in_dir)) {
        std::string name = e.path().filename().string();
        if (name.starts_with("epoch_") && name.ends_with(".omd1")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no epoch_*.omd1 checkpoints in " + in_dir);

    std::vector<omd::ParamVector> thetas;
    std::uint32_t last_epoch = 0;
    std::uint64_t digest = 0;
    for (const auto& f : files) {
        omd::Checkpoint c = omd::load_checkpoint(f.string());
        thetas.push_back(std::move(c.theta));
        last_epoch = c.meta.epoch;
        digest = c.meta.config_digest;
    }

    omd::ParamVector avg;
    if (scheme == "gwa") {
        if (mu <= 0.0) mu = std::ceil(0.6 * static_cast<double>(thetas.size()));
        omd::GwaState st = omd::GwaState::make(mu, sigma2, thetas.size(), 1);
        for (const auto& t : thetas) st = omd::gwa_update(st, t);
        avg = omd::gwa_finalize(st);
    } else if (scheme == "uniform") {
        avg = omd::baseline_average(thetas, omd::AverageScheme::Uniform);
    } else if (scheme == "ema") {
        avg = omd::baseline_average(thetas, omd::AverageScheme::Ema, decay);
    } else {
        throw std::runtime_error("--scheme must be gwa, uniform or ema");
    }
    omd::save_checkpoint(out_file, avg, {last_epoch, digest});
    std::cout << "averaged " << thetas.size() << " checkpoints (" << scheme << ") -> " << out_file
              << "\n";
    return 0;
}

int cmd_grad_check(std::uint64_t seed, std::size_t trials) {
    omd::Rng rng(seed);
    double worst = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::size_t d_x = 2 + rng.bounded(7);   // <= 8
        std::size_t k = 2 + rng.bounded(5);     // <= 6
        std::size_t b = 1 + rng.bounded(8);     // <= 8
        std::size_t hidden = 2 + rng.bounded(5);
        std::size_t d_embed = 2 + rng.bounded(4);

        omd::SimilarityClassifier cls;
        cls.extractor_dims = {d_x, hidden, d_embed};
        cls.class_embeddings = omd::Matrix(k, d_embed);
        for (std::size_t i = 0; i < k; ++i) {
            double n = 0.0;
            for (std::size_t j = 0; j < d_embed; ++j) {
                cls.class_embeddings(i, j) = rng.normal();
                n += cls.class_embeddings(i, j) * cls.class_embeddings(i, j);
            }
            n = std::sqrt(n);
            for (std::size_t j = 0; j < d_embed; ++j) cls.class_embeddings(i, j) /= n;
        }
        omd::ParamVector theta = omd::init_params(cls, rng.raw());
        omd::Batch batch;
        batch.inputs = omd::Matrix(b, d_x);
        for (double& v : batch.inputs.data) v = rng.normal();
        for (std::size_t i = 0; i < b; ++i) {
            batch.labels.push_back(rng.bounded(k));
            batch.sample_ids.push_back(static_cast<std::int64_t>(i));
        }

        omd::LossGrad lg = omd::loss_and_grad(theta, batch, cls);
        omd::ParamVector fd = omd::finite_diff_grad(theta, batch, cls, 1e-5);
        double rel = (lg.grad - fd).norm() / std::max(fd.norm(), 1e-12);
        worst = std::max(worst, rel);
    }
    std::printf("grad-check: %zu trials, max relative error %.3e\n", trials, worst);
    if (worst >= 1e-6) {
        std::cerr << "grad-check failed: relative error above 1e-6\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-batch meta-optimization and Gaussian weight averaging toolkit"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, config_path, ckpt_path, data_dir;
    std::string split_name = "test_novel_ooc", classes = "novel", scheme = "gwa", out_file;
    double mu = 0.0, sigma2 = 10.0, decay = 0.9;
    std::uint64_t seed = 1;
    std::size_t trials = 100;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic static-bias dataset");
    gen->add_option("--spec", spec_path, "DatasetSpec JSON file")->required();
    gen->add_option("--out", out_dir, "output directory")->required();

    auto* tr = app.add_subcommand("train", "run the training loop");
    tr->add_option("--config", config_path, "TrainConfig JSON file")->required();
    tr->add_option("--out", out_dir, "output directory (overrides config)");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    ev->add_option("--checkpoint", ckpt_path)->required();
    ev->add_option("--data", data_dir)->required();
    ev->add_option("--split", split_name)->required();
    ev->add_option("--classes", classes, "base|novel|all");

    auto* av = app.add_subcommand("avg", "average trajectory checkpoints");
    av->add_option("--scheme", scheme, "gwa|uniform|ema");
    av->add_option("--mu", mu);
    av->add_option("--sigma2", sigma2);
    av->add_option("--decay", decay, "ema decay");
    av->add_option("--in", data_dir, "directory of epoch checkpoints")->required();
    av->add_option("--out", out_file, "output checkpoint file")->required();

    auto* gc = app.add_subcommand("grad-check", "analytic vs finite-difference gradients");
    gc->add_option("--seed", seed);
    gc->add_option("--trials", trials);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(spec_path, out_dir);
        if (tr->parsed()) return cmd_train(config_path, out_dir);
        if (ev->parsed()) return cmd_eval(ckpt_path, data_dir, split_name, classes);
        if (av->parsed()) return cmd_avg(scheme, mu, sigma2, decay, data_dir, out_file);
        if (gc->parsed()) return cmd_grad_check(seed, trials);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
