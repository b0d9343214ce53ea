#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "h2t/errors.hpp"
#include "h2t/experiment.hpp"
#include "h2t/serialize.hpp"

using namespace h2t;
namespace fs = std::filesystem;

namespace {

// small, fast experiment for integration checks
ExperimentConfig quick_config() {
    ExperimentConfig cfg;
    cfg.classes = 5;
    cfg.n_max = 20;
    cfg.imbalance_ratio = 4.0;
    cfg.in_dims = 4;
    cfg.separation = 3.0;
    cfg.test_per_class = 6;
    cfg.head_threshold = 15.0;
    cfg.tail_threshold = 8.0;
    cfg.hidden = {8};
    cfg.feature_dim = 8;
    cfg.stage1_epochs = 3;
    cfg.stage2_epochs = 2;
    cfg.batch_size = 8;
    return cfg;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "h2t_exp_tests" / name;
    fs::remove_all(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

size_t count_lines(const std::string& text) {
    size_t n = 0;
    for (char c : text) n += c == '\n' ? 1 : 0;
    return n;
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(H2T_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("run_train writes the full artifact set") {
    const fs::path dir = fresh_dir("train");
    const ExperimentConfig cfg = quick_config();
    TrainArtifacts art = run_train(cfg, dir.string());

    for (const char* name : {"stage1.ckpt", "stage2.ckpt", "metrics.json", "record_stage1.json",
                             "record_stage2.json", "config.toml", "MANIFEST"}) {
        CHECK(fs::exists(dir / name));
    }
    // manifest covers every artifact except itself
    const std::string manifest = read_file(dir / "MANIFEST");
    CHECK(count_lines(manifest) == 6);
    CHECK(manifest.find("stage1.ckpt") != std::string::npos);
    CHECK(manifest.find("MANIFEST") == std::string::npos);
    // config echo parses back to the input
    CHECK(ExperimentConfig::from_file((dir / "config.toml").string()) == cfg);
    CHECK(art.metrics.overall >= 0.0);
    fs::remove_all(dir.parent_path());
}

TEST_CASE("resuming from a stage-I checkpoint reproduces stage II") {
    const fs::path full_dir = fresh_dir("resume_full");
    const fs::path resume_dir = fresh_dir("resume_partial");
    const ExperimentConfig cfg = quick_config();
    run_train(cfg, full_dir.string());
    run_train(cfg, resume_dir.string(), (full_dir / "stage1.ckpt").string());
    CHECK(fnv1a_file((full_dir / "stage2.ckpt").string()) ==
          fnv1a_file((resume_dir / "stage2.ckpt").string()));
    CHECK(read_file(full_dir / "metrics.json") == read_file(resume_dir / "metrics.json"));
    fs::remove_all(full_dir.parent_path());
}

TEST_CASE("sweep produces one data row per point plus medians") {
    const fs::path dir = fresh_dir("sweep");
    const ExperimentConfig cfg = quick_config();
    SweepResult sweep = run_sweep_p(cfg, dir.string(), {0.0, 0.5}, {1, 2}, 1);
    // 2 p-values x 2 seeds data rows + 2 median rows
    REQUIRE(sweep.rows.size() == 6);
    CHECK(sweep.rows[0].seed == "1");
    CHECK(sweep.rows[2].seed == "median");
    CHECK(sweep.rows[3].value == "0.5");

    const std::string csv = read_file(dir / "sweep.csv");
    CHECK(count_lines(csv) == 7); // header + 6 rows
    CHECK(csv.rfind("p,seed,head,med,tail,all\n", 0) == 0);
    CHECK(fs::exists(dir / "p0_s1" / "metrics.json"));
    CHECK(fs::exists(dir / "p0.5_s2" / "stage2.ckpt"));
    CHECK(fs::exists(dir / "stage1.ckpt"));
    fs::remove_all(dir.parent_path());
}

TEST_CASE("parallel sweep matches the serial one") {
    const fs::path serial = fresh_dir("sweep_serial");
    const fs::path parallel = fresh_dir("sweep_parallel");
    const ExperimentConfig cfg = quick_config();
    run_sweep_p(cfg, serial.string(), {0.0, 0.3, 0.7}, {1, 2}, 1);
    run_sweep_p(cfg, parallel.string(), {0.0, 0.3, 0.7}, {1, 2}, 3);
    CHECK(read_file(serial / "MANIFEST") == read_file(parallel / "MANIFEST"));
    CHECK(read_file(serial / "sweep.csv") == read_file(parallel / "sweep.csv"));
    fs::remove_all(serial.parent_path());
}

TEST_CASE("sampler ablation rows are indistinguishable on balanced data") {
    const fs::path dir = fresh_dir("ablate_rho1");
    ExperimentConfig cfg = quick_config();
    cfg.imbalance_ratio = 1.0; // balanced control: all samplers coincide
    SweepResult sweep = run_ablate_sampler(
        cfg, dir.string(),
        {SamplerKind::Reverse, SamplerKind::ClassBalanced, SamplerKind::InstanceWise}, {1}, 1);
    REQUIRE(sweep.rows.size() == 6); // 3 kinds x (1 data + 1 median)
    const double a = sweep.rows[0].metrics.overall;
    const double b = sweep.rows[2].metrics.overall;
    const double c = sweep.rows[4].metrics.overall;
    CHECK(std::abs(a - b) <= 0.02);
    CHECK(std::abs(a - c) <= 0.02);
    fs::remove_all(dir.parent_path());
}

TEST_CASE("selection ablation runs deterministic strategies once") {
    const fs::path dir = fresh_dir("ablate_sel");
    const ExperimentConfig cfg = quick_config();
    SweepResult sweep = run_ablate_selection(
        cfg, dir.string(),
        {SelectionStrategy::First, SelectionStrategy::Middle, SelectionStrategy::Last,
         SelectionStrategy::Random},
        {1, 2, 3, 4, 5}, 2);
    // first/middle/last: 1 data row each; random: 5; plus 4 medians
    size_t data_rows = 0, median_rows = 0;
    for (const SweepRow& row : sweep.rows) {
        if (row.seed == "median") {
            ++median_rows;
        } else {
            ++data_rows;
        }
    }
    CHECK(data_rows == 8);
    CHECK(median_rows == 4);
    fs::remove_all(dir.parent_path());
}

TEST_CASE("diagnose emits histograms, forces, embeddings and 2-D boundaries") {
    const fs::path dir = fresh_dir("diag2d");
    ExperimentConfig cfg = quick_config();
    cfg.in_dims = 2;
    cfg.separation = 2.0;
    run_train(cfg, dir.string());
    run_diagnose(dir.string());

    const fs::path d = dir / "diagnostics";
    for (const char* name : {"hist_stage1.csv", "hist_stage2.csv", "forces.csv",
                             "embeddings.tens", "boundary.csv", "boundary.svg", "MANIFEST"}) {
        CHECK(fs::exists(d / name));
    }
    // histogram frequencies parse back to a unit sum
    std::istringstream hist(read_file(d / "hist_stage1.csv"));
    std::string line;
    std::getline(hist, line); // header
    double sum = 0.0;
    while (std::getline(hist, line)) {
        const size_t comma = line.rfind(',');
        sum += std::stod(line.substr(comma + 1));
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);

    // embeddings hold train and test features
    NamedTensors emb = read_container((d / "embeddings.tens").string(), kTensorMagic);
    CHECK(emb.contains("train/f"));
    CHECK(emb.contains("test/f"));
    CHECK(emb.get("test/f").shape ==
          std::vector<int64_t>{cfg.classes * cfg.test_per_class, cfg.feature_dim});
    fs::remove_all(dir.parent_path());
}

TEST_CASE("diagnose skips the boundary grid off 2-D") {
    const fs::path dir = fresh_dir("diag4d");
    const ExperimentConfig cfg = quick_config(); // 4-D inputs
    run_train(cfg, dir.string());
    run_diagnose(dir.string());
    CHECK_FALSE(fs::exists(dir / "diagnostics" / "boundary.csv"));
    CHECK_FALSE(fs::exists(dir / "diagnostics" / "boundary.svg"));
    CHECK(fs::exists(dir / "diagnostics" / "embeddings.tens"));
    fs::remove_all(dir.parent_path());
}

TEST_CASE("diagnose requires a complete run directory") {
    const fs::path dir = fresh_dir("diag_missing");
    fs::create_directories(dir);
    CHECK_THROWS_AS(run_diagnose(dir.string()), IoError);
    fs::remove_all(dir.parent_path());
}

TEST_CASE("gen-data persists a loadable dataset") {
    const fs::path dir = fresh_dir("gendata");
    const ExperimentConfig cfg = quick_config();
    run_gen_data(cfg, dir.string());
    CHECK(fs::exists(dir / "dataset.tens"));
    CHECK(fs::exists(dir / "dataset.tens.json"));
    DatasetBundle ds = load_dataset((dir / "dataset.tens").string());
    CHECK(ds.counts.num_classes() == cfg.classes);
    CHECK(ds.train_x.bit_equal(cfg.make_dataset().train_x));
    fs::remove_all(dir.parent_path());
}

TEST_CASE("median is the usual order statistic") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK(median({7.0}) == 7.0);
    CHECK_THROWS_AS(median({}), ValidationError);
}

TEST_CASE("cli maps error classes to exit codes") {
    const fs::path dir = fresh_dir("cli");
    fs::create_directories(dir);
    const fs::path cfg_path = dir / "quick.toml";
    {
        std::ofstream f(cfg_path);
        f << quick_config().serialize();
    }

    // success
    CHECK(run_cli("gen-data --config " + cfg_path.string() + " --out " +
                  (dir / "data").string()) == 0);
    // config errors exit 2
    CHECK(run_cli("train --config /nonexistent.toml") == 2);
    CHECK(run_cli("train") == 2); // missing required option
    {
        std::ofstream f(dir / "bad.toml");
        f << "[dataset]\nclasses = 1\n";
    }
    CHECK(run_cli("train --config " + (dir / "bad.toml").string()) == 2);
    // numeric aborts exit 3
    {
        ExperimentConfig diverging = quick_config();
        diverging.stage1_lr = 1e18;
        std::ofstream f(dir / "diverge.toml");
        f << diverging.serialize();
    }
    CHECK(run_cli("train --config " + (dir / "diverge.toml").string() + " --out " +
                  (dir / "run").string()) == 3);
    fs::remove_all(dir.parent_path());
}
