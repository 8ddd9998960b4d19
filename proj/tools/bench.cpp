// Timing comparison between the OpenMP kernels and the serial reference.

#include <chrono>
#include <cstdio>
#include <functional>

#include "omd/core_math.hpp"
#include "omd/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using clock_type = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm up
    auto t0 = clock_type::now();
    for (int i = 0; i < reps; ++i) fn();
    auto t1 = clock_type::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

struct Instance {
    omd::SimilarityClassifier cls;
    omd::ParamVector theta;
    omd::Batch batch;
};

Instance make_instance(std::size_t b, std::size_t d_x, std::size_t hidden, std::size_t d_embed,
                       std::size_t k) {
    omd::Rng rng(42);
    Instance inst;
    inst.cls.extractor_dims = {d_x, hidden, d_embed};
    inst.cls.class_embeddings = omd::Matrix(k, d_embed);
    for (std::size_t i = 0; i < k; ++i) {
        double n = 0.0;
        for (std::size_t j = 0; j < d_embed; ++j) {
            inst.cls.class_embeddings(i, j) = rng.normal();
            n += inst.cls.class_embeddings(i, j) * inst.cls.class_embeddings(i, j);
        }
        n = std::sqrt(n);
        for (std::size_t j = 0; j < d_embed; ++j) inst.cls.class_embeddings(i, j) /= n;
    }
    inst.theta = omd::init_params(inst.cls, 7);
    inst.batch.inputs = omd::Matrix(b, d_x);
    for (double& v : inst.batch.inputs.data) v = rng.normal();
    for (std::size_t i = 0; i < b; ++i) {
        inst.batch.labels.push_back(rng.bounded(k));
        inst.batch.sample_ids.push_back(static_cast<std::int64_t>(i));
    }
    return inst;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP not enabled, parallel kernels run serially\n");
#endif
    std::printf("%-28s %12s %12s %8s\n", "kernel", "serial ms", "parallel ms", "speedup");

    struct Case {
        const char* name;
        std::size_t b, d_x, hidden, d_embed, k;
        int reps;
    };
    const Case cases[] = {
        {"loss_and_grad B=64", 64, 32, 64, 16, 20, 200},
        {"loss_and_grad B=512", 512, 32, 64, 16, 20, 50},
        {"loss_and_grad B=2048", 2048, 64, 128, 32, 40, 10},
        {"finite_diff B=32", 32, 16, 32, 8, 10, 3},
    };

    for (const auto& c : cases) {
        Instance inst = make_instance(c.b, c.d_x, c.hidden, c.d_embed, c.k);
        bool fd = std::string(c.name).find("finite_diff") != std::string::npos;
        auto serial = [&] {
            if (fd)
                omd::ref::finite_diff_grad(inst.theta, inst.batch, inst.cls, 1e-5);
            else
                omd::ref::loss_and_grad(inst.theta, inst.batch, inst.cls);
        };
        auto parallel = [&] {
            if (fd)
                omd::finite_diff_grad(inst.theta, inst.batch, inst.cls, 1e-5);
            else
                omd::loss_and_grad(inst.theta, inst.batch, inst.cls);
        };
        double ts = time_ms(serial, c.reps);
        double tp = time_ms(parallel, c.reps);
        std::printf("%-28s %12.3f %12.3f %7.2fx\n", c.name, ts, tp, ts / tp);
    }
    return 0;
}
