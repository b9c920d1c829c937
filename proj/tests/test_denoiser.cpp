#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ncarve/dataset.hpp"
#include "ncarve/denoiser.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace ncarve;

namespace {

DenoiserArch tiny_arch() {
    DenoiserArch a;
    a.hidden = {1};
    a.temb_dim = 8;
    return a;
}

std::vector<TrainExample> tiny_dataset(int n, int res, Rng& rng) {
    ProxyRanges ranges;
    ranges.subdivisions = 2;
    return synth_dataset(n, res, ranges, rng);
}

double l2(const Image& a, const Image& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("synthetic dataset") {
    SUBCASE("zero displacement keeps the front equal to the condition") {
        ProxyRanges ranges;
        ranges.subdivisions = 2;
        ranges.bumps.min_amplitude = 0.0;
        ranges.bumps.max_amplitude = 0.0;
        Rng rng(11);
        const auto data = synth_dataset(4, 24, ranges, rng);
        for (const auto& ex : data) {
            double diff = 0.0;
            for (size_t i = 0; i < ex.front.data.size(); ++i) {
                diff += std::abs(ex.front.data[i] - ex.cond.data[i]);
            }
            CHECK(diff / static_cast<double>(ex.front.size()) < 0.01);
        }
    }

    SUBCASE("seed determinism") {
        Rng a(21), b(21);
        ProxyRanges ranges;
        ranges.subdivisions = 2;
        const auto d1 = synth_dataset(3, 16, ranges, a);
        const auto d2 = synth_dataset(3, 16, ranges, b);
        for (size_t i = 0; i < d1.size(); ++i) {
            CHECK(d1[i].front.data == d2[i].front.data);
            CHECK(d1[i].back.data == d2[i].back.data);
            CHECK(d1[i].cond.data == d2[i].cond.data);
        }
    }

    SUBCASE("front and back masks mirror each other") {
        Rng rng(31);
        ProxyRanges ranges;
        ranges.subdivisions = 3;
        const auto data = synth_dataset(4, 32, ranges, rng);
        for (const auto& ex : data) {
            CHECK(mask_iou(hflip(ex.back), ex.front, 0.5) >= 0.98);
        }
    }

    SUBCASE("desk-scale resolution enforced") {
        ProxyRanges ranges;
        Rng rng(41);
        CHECK_THROWS_AS(synth_dataset(1, 128, ranges, rng), std::invalid_argument);
    }

    SUBCASE("cache round trip") {
        Rng rng(51);
        ProxyRanges ranges;
        ranges.subdivisions = 2;
        const auto data = synth_dataset(2, 16, ranges, rng);
        const std::string dir =
                (std::filesystem::temp_directory_path() / "ncarve_ds_test").string();
        save_dataset(data, dir);
        const auto loaded = load_dataset(dir);
        REQUIRE(loaded.size() == data.size());
        for (size_t i = 0; i < data.size(); ++i) {
            // nmap stores float32; compare after the same rounding
            for (size_t j = 0; j < data[i].front.data.size(); ++j) {
                CHECK(loaded[i].front.data[j] ==
                      static_cast<double>(static_cast<float>(data[i].front.data[j])));
            }
        }
        std::filesystem::remove_all(dir);
    }
}

TEST_CASE("train step") {
    const VarianceSchedule sched = default_schedule(100);
    Rng data_rng(61);
    const auto dataset = tiny_dataset(2, 8, data_rng);

    SUBCASE("a predictor that outputs the exact noise has zero loss") {
        // zero weights predict zero; zero noise makes that the true noise
        ToyDenoiser net(tiny_arch(), std::vector<double>(tiny_arch().param_count(), 0.0));
        std::vector<Image> eps = {Image(8, 8, 8, 0.0), Image(8, 8, 8, 0.0)};
        Rng rng(1);
        const auto result = train_step(net, dataset, {10, 20}, eps, 0.0, sched, rng);
        CHECK(result.loss == doctest::Approx(0.0));
    }

    SUBCASE("loss is invariant under batch permutation") {
        Rng init(71);
        ToyDenoiser net(tiny_arch(), init);
        std::vector<Image> eps;
        Rng erng(72);
        for (int i = 0; i < 2; ++i) {
            Image e(8, 8, 8);
            erng.fill_normal(e.data);
            eps.push_back(std::move(e));
        }
        Rng r1(2), r2(2);
        const auto fwd = train_step(net, {dataset[0], dataset[1]}, {10, 55}, eps, 0.0, sched, r1);
        const auto rev = train_step(net, {dataset[1], dataset[0]}, {55, 10},
                                    {eps[1], eps[0]}, 0.0, sched, r2);
        CHECK(fwd.loss == doctest::Approx(rev.loss).epsilon(1e-12));
    }

    SUBCASE("gradient matches finite differences on a small instance") {
        Rng init(81);
        ToyDenoiser net(tiny_arch(), init);
        const size_t n = net.params().size();
        CHECK(n < 300);  // small enough to difference every parameter

        std::vector<Image> eps;
        Rng erng(82);
        for (int i = 0; i < 2; ++i) {
            Image e(8, 8, 8);
            erng.fill_normal(e.data);
            eps.push_back(std::move(e));
        }
        const std::vector<int> ts = {7, 93};

        Rng g_rng(3);
        const auto analytic = train_step(net, dataset, ts, eps, 0.0, sched, g_rng);

        std::vector<double> fd(n);
        ToyDenoiser work = net;
        for (size_t i = 0; i < n; ++i) {
            const double orig = work.params()[i];
            const double h = 1e-6 * std::max(1.0, std::abs(orig));
            Rng ra(3), rb(3);
            work.params()[i] = orig + h;
            const double hi = train_step(work, dataset, ts, eps, 0.0, sched, ra).loss;
            work.params()[i] = orig - h;
            const double lo = train_step(work, dataset, ts, eps, 0.0, sched, rb).loss;
            work.params()[i] = orig;
            fd[i] = (hi - lo) / (2.0 * h);
        }
        double diff = 0.0, ref = 0.0;
        for (size_t i = 0; i < n; ++i) {
            diff += (analytic.grad[i] - fd[i]) * (analytic.grad[i] - fd[i]);
            ref += fd[i] * fd[i];
        }
        CHECK(std::sqrt(diff / ref) < 1e-3);
    }

    SUBCASE("dropout probability one blanks every condition") {
        Rng init(91);
        ToyDenoiser net(tiny_arch(), init);
        std::vector<Image> eps = {Image(8, 8, 8, 0.1), Image(8, 8, 8, 0.2)};
        Rng rng(4);
        const auto result = train_step(net, dataset, {5, 6}, eps, 1.0, sched, rng);
        CHECK(result.blank_conditioned == 2);
        Rng rng2(4);
        const auto none = train_step(net, dataset, {5, 6}, eps, 0.0, sched, rng2);
        CHECK(none.blank_conditioned == 0);
    }
}

TEST_CASE("condition channels measurably affect the prediction") {
    Rng init(101);
    DenoiserArch arch;
    arch.hidden = {8};
    ToyDenoiser net(arch, init);

    Rng rng(102);
    Image x_t(8, 8, 8);
    rng.fill_normal(x_t.data);
    Image cond_a(4, 8, 8, 0.25);
    Image cond_b(4, 8, 8, 0.75);
    const Image with_a = net.predict(x_t, 10, &cond_a);
    const Image with_b = net.predict(x_t, 10, &cond_b);
    CHECK(l2(with_a, with_b) > 1e-6);
}

TEST_CASE("training loop") {
    const VarianceSchedule sched = default_schedule(100);
    Rng data_rng(111);
    const auto dataset = tiny_dataset(4, 16, data_rng);

    DenoiserArch arch;
    arch.hidden = {8};
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 2;

    SUBCASE("seeded determinism of the loss curve") {
        Rng i1(7), i2(7), t1(8), t2(8);
        ToyDenoiser n1(arch, i1), n2(arch, i2);
        const auto r1 = train(n1, dataset, tc, sched, t1);
        const auto r2 = train(n2, dataset, tc, sched, t2);
        CHECK(r1.loss_curve == r2.loss_curve);
        CHECK(n1.params() == n2.params());
    }

    SUBCASE("diverging training aborts with the epoch index") {
        Rng init(9), trng(10);
        ToyDenoiser net(arch, init);
        TrainConfig bad = tc;
        bad.learning_rate = 1e200;
        CHECK_THROWS_WITH_AS(train(net, dataset, bad, sched, trng),
                             doctest::Contains("epoch"), std::runtime_error);
    }

    SUBCASE("empty dataset rejected") {
        Rng init(11), trng(12);
        ToyDenoiser net(arch, init);
        CHECK_THROWS_AS(train(net, {}, tc, sched, trng), std::invalid_argument);
    }
}

TEST_CASE("overfit smoke: loss halves on a tiny dataset") {
    const VarianceSchedule sched = default_schedule(100);
    Rng data_rng(121);
    ProxyRanges ranges;
    ranges.subdivisions = 2;
    const auto dataset = synth_dataset(4, 16, ranges, data_rng);

    DenoiserArch arch;
    arch.hidden = {12};
    Rng init(13), trng(14);
    ToyDenoiser net(arch, init);
    TrainConfig tc;
    tc.epochs = 60;
    tc.batch_size = 4;
    const auto result = train(net, dataset, tc, sched, trng);
    REQUIRE(result.loss_curve.size() == 60);
    CHECK(result.loss_curve.back() < 0.5 * result.loss_curve.front());
}

TEST_CASE("checkpoints") {
    Rng init(131);
    DenoiserArch arch;
    arch.hidden = {4, 4};
    ToyDenoiser net(arch, init);
    const std::string path =
            (std::filesystem::temp_directory_path() / "ncarve_test.ckpt").string();

    SUBCASE("round trip is bitwise") {
        save_checkpoint(net, path);
        const ToyDenoiser loaded = load_checkpoint(path);
        CHECK(loaded.arch() == net.arch());
        CHECK(loaded.params() == net.params());
    }

    SUBCASE("truncated file rejected") {
        save_checkpoint(net, path);
        const auto size = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, size / 2);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"),
                             std::runtime_error);
    }

    SUBCASE("architecture mismatch names both shapes") {
        save_checkpoint(net, path);
        DenoiserArch other;
        other.hidden = {16};
        try {
            load_checkpoint(path, &other);
            FAIL("expected an architecture mismatch error");
        } catch (const std::runtime_error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("[4,4]") != std::string::npos);
            CHECK(msg.find("[16]") != std::string::npos);
        }
    }

    SUBCASE("bad magic rejected") {
        std::ofstream f(path, std::ios::binary);
        f << "not a checkpoint";
        f.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"),
                             std::runtime_error);
    }

    std::filesystem::remove(path);
}
