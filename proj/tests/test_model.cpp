#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "semikan/model.hpp"
#include "semikan/ops.hpp"
#include "semikan/serialize.hpp"
#include "testutil.hpp"

#include <set>

using namespace semikan;
using testutil::random_tensor;

namespace {

ModelConfig micro_config() {
    ModelConfig cfg;
    cfg.channels = {2, 3, 4};
    cfg.embed_dim = 6;
    cfg.patch = 2;
    cfg.num_decoders = 2;
    cfg.strategies = {Upsample::Nearest, Upsample::TransposedConv};
    return cfg;
}

} // namespace

TEST_CASE("default config builds and produces per-decoder logit maps") {
    ModelConfig cfg; // the desk-scale default: B=3, [16,32,64], D=128, P=2
    SemiKanModel model = SemiKanModel::build(cfg, 1);
    CHECK(model.parameter_count() > 0);
    Rng rng(70);
    Tensor images = random_tensor({2, 1, 64, 64}, rng, 0, 1, false);
    NoGradScope no_grad;
    std::vector<Tensor> logits = model.forward(images, true);
    REQUIRE(logits.size() == 3);
    for (const Tensor& lg : logits) CHECK(lg.shape() == Shape{2, 2, 64, 64});
}

TEST_CASE("two decoders give exactly two outputs") {
    ModelConfig cfg = micro_config();
    SemiKanModel model = SemiKanModel::build(cfg, 2);
    Rng rng(71);
    Tensor images = random_tensor({1, 1, 16, 16}, rng, 0, 1, false);
    NoGradScope no_grad;
    CHECK(model.forward(images, true).size() == 2);
}

TEST_CASE("identical seeds build bit-identical parameters") {
    ModelConfig cfg = micro_config();
    SemiKanModel a = SemiKanModel::build(cfg, 7);
    SemiKanModel b = SemiKanModel::build(cfg, 7);
    auto pa = a.parameters();
    auto pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].first == pb[i].first);
        for (int64_t j = 0; j < pa[i].second.numel(); ++j)
            CHECK(pa[i].second.data()[size_t(j)] == pb[i].second.data()[size_t(j)]);
    }
}

TEST_CASE("config validation rejects bad settings") {
    ModelConfig cfg = micro_config();
    cfg.num_decoders = 4;
    CHECK_THROWS_AS(SemiKanModel::build(cfg, 1), ConfigError);
    cfg = micro_config();
    cfg.strategies = {Upsample::Nearest, Upsample::Nearest};
    CHECK_THROWS_AS(SemiKanModel::build(cfg, 1), ConfigError);
    cfg.allow_duplicate_strategies = true;
    CHECK_NOTHROW(SemiKanModel::build(cfg, 1));
    // spatial divisibility enforced at forward time
    ModelConfig ok = micro_config();
    SemiKanModel model = SemiKanModel::build(ok, 1);
    Tensor bad({1, 1, 24, 24});
    CHECK_THROWS_AS(model.forward(bad, true), ConfigError);
}

TEST_CASE("duplicate-strategy decoders with copied parameters emit identical logits") {
    ModelConfig cfg = micro_config();
    cfg.strategies = {Upsample::Nearest, Upsample::Nearest};
    cfg.allow_duplicate_strategies = true; // test-only override
    SemiKanModel model = SemiKanModel::build(cfg, 3);
    // copy decoder 0 parameters into decoder 1
    for (auto& [name, t] : model.parameters()) {
        if (name.rfind("dec0.", 0) != 0) continue;
        std::string peer = "dec1." + name.substr(5);
        for (auto& [n2, t2] : model.parameters()) {
            if (n2 != peer) continue;
            Tensor dst = t2;
            std::copy(t.data().begin(), t.data().end(), dst.data().begin());
        }
    }
    Rng rng(72);
    Tensor images = random_tensor({1, 1, 16, 16}, rng, 0, 1, false);
    NoGradScope no_grad;
    std::vector<Tensor> logits = model.forward(images, true);
    REQUIRE(logits.size() == 2);
    for (int64_t i = 0; i < logits[0].numel(); ++i)
        CHECK(logits[0].data()[size_t(i)] == logits[1].data()[size_t(i)]);
}

TEST_CASE("gradient reaches every registered parameter") {
    ModelConfig cfg = micro_config();
    SemiKanModel model = SemiKanModel::build(cfg, 5);
    Rng rng(73);
    Tensor images = random_tensor({2, 1, 16, 16}, rng, 0, 1, true);
    Tape tape;
    TapeScope scope(tape);
    std::vector<Tensor> logits = model.forward(images, true);
    Tensor loss;
    for (const Tensor& lg : logits) loss = loss.defined() ? loss + sum(lg) : sum(lg);
    tape.backward(loss);
    for (auto& [name, t] : model.parameters()) {
        auto g = static_cast<const Tensor&>(t).grad();
        REQUIRE_MESSAGE(!g.empty(), name);
        double mx = 0.0;
        for (double v : g) mx = std::max(mx, std::abs(v));
        CHECK_MESSAGE(mx > 0.0, name);
    }
}

TEST_CASE("eval-mode forward is bit-deterministic") {
    ModelConfig cfg = micro_config();
    SemiKanModel model = SemiKanModel::build(cfg, 6);
    Rng rng(74);
    Tensor images = random_tensor({1, 1, 16, 16}, rng, 0, 1, false);
    NoGradScope no_grad;
    model.forward(images, true); // touch running stats once
    std::vector<Tensor> a = model.forward(images, false);
    std::vector<Tensor> b = model.forward(images, false);
    for (size_t d = 0; d < a.size(); ++d)
        for (int64_t i = 0; i < a[d].numel(); ++i)
            CHECK(a[d].data()[size_t(i)] == b[d].data()[size_t(i)]);
}

TEST_CASE("encoder runs exactly once per forward regardless of decoder count") {
    ModelConfig cfg;
    cfg.channels = {2, 3, 4};
    cfg.embed_dim = 6;
    cfg.num_decoders = 3;
    SemiKanModel model = SemiKanModel::build(cfg, 8);
    Rng rng(75);
    Tensor images = random_tensor({1, 1, 16, 16}, rng, 0, 1, false);
    NoGradScope no_grad;
    CHECK(model.encoder_passes() == 0);
    model.forward(images, true);
    CHECK(model.encoder_passes() == 1);
    model.forward(images, false);
    CHECK(model.encoder_passes() == 2);
}

TEST_CASE("decoder parameter sets are disjoint") {
    ModelConfig cfg = micro_config();
    SemiKanModel model = SemiKanModel::build(cfg, 9);
    std::set<const void*> seen;
    for (auto& [name, t] : model.parameters()) {
        CHECK(seen.insert(t.id()).second);
    }
}

TEST_CASE("predict takes the argmax of averaged probabilities with low-index ties") {
    ModelConfig cfg = micro_config();
    SemiKanModel model = SemiKanModel::build(cfg, 10);
    Rng rng(76);
    Tensor images = random_tensor({1, 1, 16, 16}, rng, 0, 1, false);
    model.forward(images, true);

    // force class 1 everywhere via the head bias
    for (auto& [name, t] : model.parameters()) {
        if (name.find("head_kernel") != std::string::npos) {
            Tensor dst = t;
            for (double& v : dst.data()) v = 0.0;
        }
        if (name.find("head_bias") != std::string::npos) {
            Tensor dst = t;
            dst.at_mut({0, 0, 0, 0}) = 0.0;
            dst.at_mut({0, 1, 0, 0}) = 10.0;
        }
    }
    Tensor mask = model.predict(images);
    CHECK(mask.shape() == Shape{1, 16, 16});
    for (double v : mask.data()) CHECK(v == 1.0);

    // exact two-way tie goes to class 0
    for (auto& [name, t] : model.parameters()) {
        if (name.find("head_bias") != std::string::npos) {
            Tensor dst = t;
            for (double& v : dst.data()) v = 3.0;
        }
    }
    Tensor tie = model.predict(images);
    for (double v : tie.data()) CHECK(v == 0.0);
}

TEST_CASE("predict agrees with a brute-force average-then-argmax oracle") {
    ModelConfig cfg = micro_config();
    SemiKanModel model = SemiKanModel::build(cfg, 11);
    Rng rng(77);
    Tensor images = random_tensor({2, 1, 16, 16}, rng, 0, 1, false);
    model.forward(images, true);
    Tensor pred = model.predict(images);

    NoGradScope no_grad;
    std::vector<Tensor> logits = model.forward(images, false);
    int64_t K = cfg.num_classes, H = 16, W = 16;
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                std::vector<double> avg(size_t(K), 0.0);
                for (const Tensor& lg : logits) {
                    // per-pixel softmax
                    double mx = lg.at({n, 0, y, x});
                    for (int64_t k = 1; k < K; ++k) mx = std::max(mx, lg.at({n, k, y, x}));
                    double z = 0.0;
                    std::vector<double> e(size_t(K), 0.0);
                    for (int64_t k = 0; k < K; ++k) {
                        e[size_t(k)] = std::exp(lg.at({n, k, y, x}) - mx);
                        z += e[size_t(k)];
                    }
                    for (int64_t k = 0; k < K; ++k) avg[size_t(k)] += e[size_t(k)] / z;
                }
                int64_t best = 0;
                for (int64_t k = 1; k < K; ++k)
                    if (avg[size_t(k)] > avg[size_t(best)]) best = k;
                CHECK(pred.at({n, y, x}) == double(best));
            }
}

TEST_CASE("checkpoint state round-trips through the SKCK container") {
    ModelConfig cfg = micro_config();
    SemiKanModel model = SemiKanModel::build(cfg, 12);
    Rng rng(78);
    Tensor images = random_tensor({1, 1, 16, 16}, rng, 0, 1, false);
    model.forward(images, true); // move running stats off their init values

    Checkpoint ck;
    ck.config_echo = "test = 1\n";
    for (auto& [name, t] : model.parameters())
        ck.tensors.emplace_back(name,
                                Tensor::from_data(t.shape(), {t.data().begin(), t.data().end()}));
    for (auto& [name, t] : model.buffers())
        ck.tensors.emplace_back(name,
                                Tensor::from_data(t.shape(), {t.data().begin(), t.data().end()}));
    ck.rng_state = {1, 2, 3};
    std::string path = "/tmp/semikan_test_model.skck";
    ck.save(path);
    Checkpoint loaded = Checkpoint::load(path);
    CHECK(loaded.config_echo == ck.config_echo);
    CHECK(loaded.rng_state == ck.rng_state);

    SemiKanModel fresh = SemiKanModel::build(cfg, 999); // different init
    fresh.load_state(loaded.tensors);
    NoGradScope no_grad;
    std::vector<Tensor> a = model.forward(images, false);
    std::vector<Tensor> b = fresh.forward(images, false);
    for (size_t d = 0; d < a.size(); ++d)
        for (int64_t i = 0; i < a[d].numel(); ++i)
            CHECK(a[d].data()[size_t(i)] == b[d].data()[size_t(i)]);

    // missing tensor -> config error
    loaded.tensors.erase(loaded.tensors.begin());
    CHECK_THROWS_AS(fresh.load_state(loaded.tensors), ConfigError);
}

TEST_CASE("ablated stage matches the KAN stage parameter count within 10 percent") {
    ModelConfig cfg; // default widths
    ModelConfig abl = cfg;
    abl.use_kan = false;
    SemiKanModel kan_model = SemiKanModel::build(cfg, 13);
    SemiKanModel abl_model = SemiKanModel::build(abl, 13);

    auto stage_params = [](const SemiKanModel& m, const std::string& prefix) {
        int64_t n = 0;
        for (const auto& [name, t] : m.parameters())
            if (name.rfind(prefix, 0) == 0 && name.find("fuse") == std::string::npos &&
                name.find("head") == std::string::npos && name.find("up") != 0 &&
                name.find(".up") == std::string::npos)
                n += t.numel();
        return n;
    };
    for (const std::string prefix : {"bottleneck.", "dec0.", "dec1.", "dec2."}) {
        int64_t kan_stage = stage_params(kan_model, prefix);
        int64_t abl_stage = stage_params(abl_model, prefix);
        CHECK(std::abs(double(kan_stage - abl_stage)) / double(kan_stage) <= 0.10);
    }

    Rng rng(79);
    Tensor images = random_tensor({1, 1, 64, 64}, rng, 0, 1, false);
    NoGradScope no_grad;
    std::vector<Tensor> logits = abl_model.forward(images, true);
    CHECK(logits.size() == 3);
    CHECK(logits[0].shape() == Shape{1, 2, 64, 64});
}
