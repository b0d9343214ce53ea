#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "h2t/config.hpp"
#include "h2t/errors.hpp"
#include "h2t/model.hpp"
#include "h2t/rng.hpp"
#include "h2t/serialize.hpp"

using namespace h2t;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Tensor random_tensor(const std::vector<int64_t>& shape, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    for (float& v : t.data) v = static_cast<float>(rng.normal());
    return t;
}

} // namespace

TEST_CASE("named tensor container round trips bit-exactly") {
    Rng rng(13);
    NamedTensors nt;
    nt.add("alpha", random_tensor({3, 4}, rng));
    nt.add("beta/gamma", random_tensor({7}, rng));
    nt.add("scalarish", random_tensor({1, 1, 1}, rng));
    const std::string path = temp_path("h2t_container.tens");
    write_container(path, kTensorMagic, nt);
    NamedTensors back = read_container(path, kTensorMagic);
    REQUIRE(back.entries.size() == 3);
    CHECK(back.entries[0].first == "alpha");
    for (size_t i = 0; i < nt.entries.size(); ++i) {
        CHECK(back.entries[i].second.bit_equal(nt.entries[i].second));
    }
    // checkpoint magic on a tensor file is a bad-magic error
    CHECK_THROWS_AS(read_container(path, kCheckpointMagic), BadMagicError);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint restores every parameter bit-exactly") {
    BackboneSpec spec;
    spec.kind = BackboneKind::TinyConv;
    spec.in_channels = 1;
    spec.in_h = 8;
    spec.in_w = 8;
    spec.in_dims = 64;
    spec.conv1_channels = 3;
    spec.feature_dim = 5;
    ModelState m = init_model(spec, 6, 321);
    const std::string path = temp_path("h2t_model.ckpt");
    save_checkpoint(path, m);

    ModelState other = init_model(spec, 6, 99); // different values
    CHECK(other.backbone.value_hash() != m.backbone.value_hash());
    load_checkpoint(path, other);
    CHECK(other.backbone.value_hash() == m.backbone.value_hash());
    CHECK(other.classifier.value_hash() == m.classifier.value_hash());

    // shape mismatch is rejected
    BackboneSpec small = spec;
    small.feature_dim = 4;
    ModelState wrong = init_model(small, 6, 1);
    CHECK_THROWS_AS(load_checkpoint(path, wrong), ShapeError);
    std::remove(path.c_str());
}

TEST_CASE("container errors are distinct types") {
    const std::string path = temp_path("h2t_broken.tens");
    {
        NamedTensors nt;
        Rng rng(2);
        nt.add("x", random_tensor({4}, rng));
        write_container(path, kTensorMagic, nt);
    }
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    SUBCASE("truncated header") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << bytes.substr(0, 4);
        out.close();
        CHECK_THROWS_AS(read_container(path, kTensorMagic), TruncatedFileError);
    }
    SUBCASE("trailing garbage") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << bytes << "extra";
        out.close();
        CHECK_THROWS_AS(read_container(path, kTensorMagic), TruncatedFileError);
    }
    SUBCASE("corrupted checksum") {
        std::string bad = bytes;
        bad.back() = static_cast<char>(bad.back() ^ 1);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << bad;
        out.close();
        CHECK_THROWS_AS(read_container(path, kTensorMagic), ChecksumError);
    }
    std::remove(path.c_str());
}

TEST_CASE("default config round trips through its file format") {
    ExperimentConfig cfg;
    const std::string text = cfg.serialize();
    ExperimentConfig back = ExperimentConfig::from_string(text);
    CHECK(back == cfg);
    // serialization is canonical: serializing again gives the same text
    CHECK(back.serialize() == text);
}

TEST_CASE("modified config round trips losslessly") {
    ExperimentConfig cfg;
    cfg.classes = 7;
    cfg.imbalance_ratio = 31.5;
    cfg.backbone_kind = "tinyconv";
    cfg.in_dims = 64;
    cfg.in_channels = 1;
    cfg.conv_in_h = 8;
    cfg.conv_in_w = 8;
    cfg.hidden = {12, 9};
    cfg.milestones = {0.5, 0.75, 0.9};
    cfg.stage2_lr = -1.0;
    cfg.fusion_strategy = "middle";
    cfg.fusing_branch = "reverse";
    cfg.reinit_classifier = true;
    cfg.out_dir = "runs/exotic";
    cfg.train_seed = 18446744073709551615ULL; // u64 max survives
    ExperimentConfig back = ExperimentConfig::from_string(cfg.serialize());
    CHECK(back == cfg);
}

TEST_CASE("config parser tolerates comments and spacing") {
    const std::string text = R"(# experiment
[dataset]
classes = 4        # trailing comment
  n_max   =  40

[fusion]
strategy = "first"
)";
    ExperimentConfig cfg = ExperimentConfig::from_string(text);
    CHECK(cfg.classes == 4);
    CHECK(cfg.n_max == 40);
    CHECK(cfg.fusion_strategy == "first");
    CHECK(cfg.feature_dim == 64); // untouched default
}

TEST_CASE("unknown keys are named in the error") {
    try {
        ExperimentConfig::from_string("[dataset]\nclasess = 4\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("clasess") != std::string::npos);
    }
}

TEST_CASE("type errors are field level") {
    try {
        ExperimentConfig::from_string("[dataset]\nclasses = \"many\"\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[dataset] classes") != std::string::npos);
    }
}

TEST_CASE("validation rejects inconsistent configs") {
    ExperimentConfig cfg;
    cfg.imbalance_ratio = 1000.0; // exceeds n_max = 150
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    ExperimentConfig conv;
    conv.backbone_kind = "tinyconv"; // 1 * 4 * 4 != 16 is fine; mismatch:
    conv.conv_in_h = 8;
    CHECK_THROWS_AS(conv.validate(), ConfigError);

    ExperimentConfig bad_p;
    bad_p.fusion_p = 1.5;
    CHECK_THROWS_AS(bad_p.validate(), ConfigError);
}

TEST_CASE("default config is valid") {
    ExperimentConfig cfg;
    CHECK_NOTHROW(cfg.validate());
}
