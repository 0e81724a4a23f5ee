#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "mcscast/labels.hpp"
#include "mcscast/model.hpp"
#include "mcscast/training.hpp"

using namespace mcscast;

namespace {

FeatureWindow random_window(Rng& rng, int seq = 40, int features = 12) {
    FeatureWindow w;
    w.rows = seq;
    w.data.resize(static_cast<std::size_t>(seq) * features);
    for (auto& v : w.data) v = rng.normal();
    return w;
}

LabelVector random_label(Rng& rng) {
    LabelVector l;
    for (int k = 0; k < kMcsCount; ++k) {
        l.trials[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(rng.uniform_int(0, 8));
        l.success[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(
            rng.uniform_int(0, static_cast<int>(l.trials[static_cast<std::size_t>(k)])));
    }
    return l;
}

}  // namespace

TEST_CASE("parameter budget matches the closed form") {
    const ModelConfig cfg;
    SECTION("per-tensor arithmetic") {
        // input projection 12*8+8, positional table 40*8
        ModelConfig tiny = cfg;
        CHECK(param_count(cfg) ==
              (12 * 8 + 8) + 40 * 8 +
                  2 * (4 * (8 * 8 + 8) + 2 * (8 + 8) + (8 * 32 + 32 + 32 * 8 + 8)) + (8 + 8) +
                  (8 * 32 + 32 + 32 * 28 + 28));
        (void)tiny;
    }
    SECTION("one encoder layer is 872 parameters") {
        ModelConfig one = cfg;
        one.n_layers = 1;
        CHECK(param_count(cfg) - param_count(one) == 872);
    }
    SECTION("total lands inside the documented budget") {
        CHECK(param_count(cfg) >= 3000);
        CHECK(param_count(cfg) <= 4000);
    }
    SECTION("layout covers every parameter exactly once") {
        const ModelParams p = init_params(cfg, 1);
        CHECK(static_cast<std::int64_t>(p.flat.size()) == param_count(cfg));
        std::size_t covered = 0;
        std::size_t expected_offset = 0;
        for (const auto* t : p.layout.ordered_tensors()) {
            CHECK(t->offset == expected_offset);  // contiguous, no overlap
            covered += static_cast<std::size_t>(t->rows) * t->cols;
            expected_offset = covered;
        }
        CHECK(covered == p.flat.size());
    }
}

TEST_CASE("initialization is deterministic and structured") {
    const ModelConfig cfg;
    const ModelParams a = init_params(cfg, 42);
    const ModelParams b = init_params(cfg, 42);
    CHECK(a.flat == b.flat);
    const ModelParams c = init_params(cfg, 43);
    CHECK(a.flat != c.flat);
    // positional embeddings start at zero, gains at one
    const double* pos = a.tensor(a.layout.pos);
    for (int i = 0; i < cfg.seq_len * cfg.d_model; ++i) CHECK(pos[i] == 0.0);
    const double* gain = a.tensor(a.layout.fin_g);
    for (int i = 0; i < cfg.d_model; ++i) CHECK(gain[i] == 1.0);
}

TEST_CASE("zero parameters give exactly 0.5 everywhere") {
    const ModelConfig cfg;
    const ModelParams p = zero_params(cfg);
    Rng rng(5);
    const auto probs = forward(p, random_window(rng));
    REQUIRE(probs.size() == 28);
    for (double v : probs) CHECK(v == 0.5);
}

TEST_CASE("forward emits 28 probabilities and reacts to its input") {
    const ModelConfig cfg;
    const ModelParams p = init_params(cfg, 7);
    Rng rng(11);
    FeatureWindow w = random_window(rng);
    const auto probs = forward(p, w);
    REQUIRE(probs.size() == 28);
    for (double v : probs) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    SECTION("bit-reproducible") {
        CHECK(forward(p, w) == probs);
    }
    SECTION("input sensitivity") {
        FeatureWindow w2 = w;
        w2.at(17, 3) += 1e-3;
        CHECK(forward(p, w2) != probs);
    }
    SECTION("positional embeddings make row order matter") {
        ModelParams trained = init_params(cfg, 7);
        // give the positional table some signal first
        Rng prng(13);
        double* pos = trained.tensor(trained.layout.pos);
        for (int i = 0; i < cfg.seq_len * cfg.d_model; ++i) pos[i] = prng.normal(0.0, 0.1);
        const auto base = forward(trained, w);
        FeatureWindow rotated = w;
        std::rotate(rotated.data.begin(), rotated.data.begin() + kFeatureCount,
                    rotated.data.end());
        CHECK(forward(trained, rotated) != base);
    }
    SECTION("shape mismatch is rejected") {
        FeatureWindow bad = w;
        bad.rows = 39;
        bad.data.resize(39 * 12);
        CHECK_THROWS_AS(forward(p, bad), std::invalid_argument);
    }
}

TEST_CASE("backward matches central finite differences") {
    const ModelConfig cfg;
    ModelParams params = init_params(cfg, 2024);
    Rng rng(31337);
    const double step = 1e-4;
    double worst = 0.0;
    for (int wi = 0; wi < 5; ++wi) {
        const FeatureWindow w = random_window(rng);
        const LabelVector label = random_label(rng);

        ForwardCache cache;
        const auto probs = forward(params, w, cache);
        const LossResult loss = loss_asl(probs, label, 1.4);
        REQUIRE_FALSE(loss.skipped);
        const auto grad = backward(params, cache, loss.grad);

        for (int pi = 0; pi < 20; ++pi) {
            const std::size_t idx =
                static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(params.flat.size()) - 1));
            const double saved = params.flat[idx];
            params.flat[idx] = saved + step;
            const double up = loss_asl(forward(params, w), label, 1.4).value;
            params.flat[idx] = saved - step;
            const double down = loss_asl(forward(params, w), label, 1.4).value;
            params.flat[idx] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double denom = std::max({std::abs(fd), std::abs(grad[idx]), 1e-6});
            const double rel = std::abs(fd - grad[idx]) / denom;
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("backward edge cases") {
    const ModelConfig cfg;
    ModelParams params = init_params(cfg, 5);
    Rng rng(6);
    const FeatureWindow w = random_window(rng);
    ForwardCache cache;
    forward(params, w, cache);

    SECTION("zero output gradient gives zero parameter gradient") {
        std::vector<double> zero(28, 0.0);
        const auto grad = backward(params, cache, zero);
        for (double g : grad) CHECK(g == 0.0);
    }
    SECTION("masked label entries contribute nothing") {
        LabelVector l;
        l.trials[5] = 4;
        l.success[5] = 2;  // only index 5 is valid
        const LossResult loss = loss_asl(cache.probs, l, 1.4);
        for (int k = 0; k < kMcsCount; ++k) {
            if (k != 5) CHECK(loss.grad[static_cast<std::size_t>(k)] == 0.0);
        }
    }
    SECTION("stale cache is rejected after an optimizer step") {
        AdamWState opt = AdamWState::init(params.flat.size());
        std::vector<double> g(params.flat.size(), 1e-3);
        adamw_step(params, g, opt, 1e-3, 0.0, params.decay_mask());
        std::vector<double> dprobs(28, 1.0);
        CHECK_THROWS_AS(backward(params, cache, dprobs), StaleCacheError);
    }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    const ModelConfig cfg;
    const ModelParams p = init_params(cfg, 77);
    const std::string path =
        (std::filesystem::temp_directory_path() / "mcscast_ckpt_test.bin").string();
    save_checkpoint(p, path, 0x1234);
    std::uint64_t fp = 0;
    const ModelParams back = load_checkpoint(path, &fp);
    CHECK(fp == 0x1234);
    CHECK(back.config == p.config);
    CHECK(back.flat == p.flat);
    std::remove(path.c_str());
}
