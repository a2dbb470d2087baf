#include <doctest.h>

#include "test_util.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "sage/model.hpp"

using namespace sage;

namespace {

ExtractorSpec identity_spec(int d) {
    ExtractorSpec s;
    s.input_shape = {d};
    s.feature_dim = d;
    return s;
}

ExtractorSpec conv_spec() {
    ExtractorSpec s;
    s.input_shape = {2, 4, 4};
    s.layers = {ConvSpec{2, 4, 3, 2, 1, Activation::Tanh}, DenseSpec{16, 6, Activation::Tanh}};
    s.insertion_points = {0};
    s.feature_dim = 6;
    return s;
}

}  // namespace

TEST_CASE("extractor spec validation") {
    CHECK_NOTHROW(conv_spec().validate());

    ExtractorSpec bad_dim = conv_spec();
    bad_dim.feature_dim = 7;
    CHECK_THROWS_AS(bad_dim.validate(), ConfigError);

    ExtractorSpec bad_insert = conv_spec();
    bad_insert.insertion_points = {1};  // dense output is not image-shaped
    CHECK_THROWS_AS(bad_insert.validate(), ConfigError);

    ExtractorSpec bad_index = conv_spec();
    bad_index.insertion_points = {5};
    CHECK_THROWS_AS(bad_index.validate(), ConfigError);

    ExtractorSpec bad_chain = conv_spec();
    std::get<DenseSpec>(bad_chain.layers[1]).in = 9;
    CHECK_THROWS_AS(bad_chain.validate(), ConfigError);
}

TEST_CASE("identity extractor passes input through") {
    Model m(identity_spec(3), 2, 1, StyleAlignConfig{}, 10.0, Rng(1));
    Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Rng rng(0);
    Tensor f = m.forward_features(x, false, rng);
    CHECK(f.values() == x.values());
}

TEST_CASE("eval mode with tau=1 equals tau=0 output") {
    StyleAlignConfig on;
    on.tau = 1.0;
    StyleAlignConfig off;
    off.tau = 0.0;
    Model m1(conv_spec(), 3, 2, on, 10.0, Rng(7));
    Model m2(conv_spec(), 3, 2, off, 10.0, Rng(7));  // same init stream
    std::vector<double> v(2 * 2 * 4 * 4);
    Rng fill(2);
    for (auto& x : v) x = fill.normal();
    Tensor x = Tensor::from({2, 2, 4, 4}, v);
    Rng r1(5), r2(5);
    Tensor f1 = m1.forward_features(x, false, r1);
    Tensor f2 = m2.forward_features(x, false, r2);
    CHECK(f1.values() == f2.values());
}

TEST_CASE("single linear layer reproduces a weight column") {
    ExtractorSpec s;
    s.input_shape = {3};
    s.layers = {DenseSpec{3, 2, Activation::None}};
    s.feature_dim = 2;
    Model m(s, 2, 1, StyleAlignConfig{}, 10.0, Rng(3));
    auto params = m.parameters();
    params[0].values_mut() = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};  // [3,2] row-major
    params[1].values_mut() = {0.5, -0.5};
    Tensor e1 = Tensor::from({1, 3}, {0, 1, 0});  // selects row 1
    Rng rng(0);
    Tensor f = m.forward_features(e1, false, rng);
    CHECK(f.values()[0] == approx(3.5));
    CHECK(f.values()[1] == approx(3.5));
}

TEST_CASE("head_evidence worked cases") {
    Model m(identity_spec(2), 2, 1, StyleAlignConfig{}, 10.0, Rng(5));
    auto params = m.parameters();  // [weight d x C, bias C]

    SUBCASE("zero weights give unit evidence") {
        params[0].values_mut() = {0, 0, 0, 0};
        params[1].values_mut() = {0, 0};
        Tensor f = Tensor::from({2}, {0.3, -0.8});
        Tensor e = m.head_evidence_vec(f, 0);
        CHECK(e.values()[0] == approx(1.0));
        CHECK(e.values()[1] == approx(1.0));
    }
    SUBCASE("logits invert through exp") {
        params[0].values_mut() = {0, 0, 0, 0};
        params[1].values_mut() = {std::log(2.0), 0.0};
        Tensor e = m.head_evidence_vec(Tensor::from({2}, {1.0, 1.0}), 0);
        CHECK(e.values()[0] == approx(2.0).abs(1e-12));
        CHECK(e.values()[1] == approx(1.0).abs(1e-12));
    }
    SUBCASE("clamp bounds evidence at exp(clip)") {
        params[0].values_mut() = {100.0, 0.0, 0.0, 0.0};
        params[1].values_mut() = {0.0, 0.0};
        Tensor e = m.head_evidence_vec(Tensor::from({2}, {1.0, 0.0}), 0);
        CHECK(e.values()[0] == approx(std::exp(10.0)).abs(1e-9));
        CHECK(e.values()[1] == approx(1.0));
    }
}

TEST_CASE("evidence is strictly positive and finite for extreme inputs") {
    Model m(identity_spec(4), 3, 2, StyleAlignConfig{}, 10.0, Rng(11));
    Tensor f = Tensor::from({2, 4}, {1e6, -1e6, 42.0, -42.0, 0.0, 0.0, 1e-12, -1e-12});
    for (int h = 0; h < 2; ++h) {
        Tensor e = m.head_evidence(f, h);
        for (double v : e.values()) {
            CHECK(v > 0.0);
            CHECK(v <= std::exp(10.0) + 1e-9);
        }
    }
}

TEST_CASE("forward_all_heads matches per-head calls") {
    Model m(identity_spec(3), 4, 3, StyleAlignConfig{}, 10.0, Rng(13));
    Tensor f = Tensor::from({2, 3}, {0.1, -0.2, 0.3, 0.4, 0.5, -0.6});
    auto all = m.forward_all_heads(f);
    REQUIRE(all.size() == 3);
    for (int h = 0; h < 3; ++h) {
        CHECK(all[h].values() == m.head_evidence(f, h).values());
    }
}

TEST_CASE("forward is deterministic with style disabled") {
    Model m(conv_spec(), 3, 2, StyleAlignConfig{}, 10.0, Rng(17));
    m.set_style_enabled(false);
    std::vector<double> v(2 * 2 * 4 * 4, 0.25);
    Tensor x = Tensor::from({2, 2, 4, 4}, v);
    Rng r1(1), r2(99);
    CHECK(m.forward_features(x, true, r1).values() ==
          m.forward_features(x, true, r2).values());
}

TEST_CASE("checkpoint round trip is bit-exact") {
    StyleAlignConfig style;
    style.tau = 0.37;
    Model m(conv_spec(), 5, 3, style, 8.5, Rng(19));
    const std::string path = "/tmp/sage_test_ckpt.bin";
    m.save_checkpoint(path);
    Model r = Model::load_checkpoint(path);

    CHECK(r.num_classes() == 5);
    CHECK(r.num_domains() == 3);
    CHECK(r.style_config().tau == approx(0.37));
    CHECK(r.head(0).clip_bound == approx(8.5));
    auto pa = m.parameters();
    auto pb = r.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].values() == pb[i].values());
    CHECK(m.parameter_checksum() == r.parameter_checksum());

    std::vector<double> v(2 * 2 * 4 * 4);
    Rng fill(23);
    for (auto& x : v) x = fill.normal();
    Tensor x = Tensor::from({2, 2, 4, 4}, v);
    Rng rng(0);
    CHECK(m.forward_features(x, false, rng).values() ==
          r.forward_features(x, false, rng).values());
    std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints are rejected") {
    Model m(identity_spec(2), 2, 1, StyleAlignConfig{}, 10.0, Rng(29));
    const std::string path = "/tmp/sage_test_ckpt_bad.bin";
    m.save_checkpoint(path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-9, std::ios::end);  // flip a payload byte ahead of the checksum
        char c;
        f.seekg(-9, std::ios::end);
        f.get(c);
        f.seekp(-9, std::ios::end);
        f.put(static_cast<char>(c ^ 0xFF));
    }
    CHECK_THROWS_AS(Model::load_checkpoint(path), IoError);
    CHECK_THROWS_AS(Model::load_checkpoint("/tmp/does_not_exist.bin"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("parameter initialization is seed-reproducible") {
    Model a(conv_spec(), 3, 2, StyleAlignConfig{}, 10.0, Rng(31));
    Model b(conv_spec(), 3, 2, StyleAlignConfig{}, 10.0, Rng(31));
    CHECK(a.parameter_checksum() == b.parameter_checksum());
    Model c(conv_spec(), 3, 2, StyleAlignConfig{}, 10.0, Rng(32));
    CHECK(a.parameter_checksum() != c.parameter_checksum());
}
