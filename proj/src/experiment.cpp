#include "h2t/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "h2t/errors.hpp"
#include "h2t/serialize.hpp"

namespace fs = std::filesystem;

namespace h2t {

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("H2T_LOG");
        if (!env) return LogLevel::Info;
        const std::string v(env);
        if (v == "quiet") return LogLevel::Quiet;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) std::cerr << "[h2t] " + msg + "\n";
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug) std::cerr << "[h2t] " + msg + "\n";
}

double median(std::vector<double> values) {
    if (values.empty()) throw ValidationError("median of empty set");
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ArtifactDir::ArtifactDir(const std::string& root) : root_(root) {
    fs::create_directories(root_);
}

std::string ArtifactDir::path_of(const std::string& relative) const {
    return (fs::path(root_) / relative).string();
}

void ArtifactDir::write_text(const std::string& relative, const std::string& content) {
    const fs::path full = fs::path(root_) / relative;
    fs::create_directories(full.parent_path());
    std::ofstream f(full, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + full.string() + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw IoError("short write to '" + full.string() + "'");
    note(relative);
}

void ArtifactDir::note(const std::string& relative) {
    files_.push_back(relative);
}

void ArtifactDir::write_manifest() const {
    std::vector<std::string> sorted = files_;
    std::sort(sorted.begin(), sorted.end());
    std::string out;
    for (const std::string& rel : sorted) {
        out += hash_hex(fnv1a_file((fs::path(root_) / rel).string())) + "  " + rel + "\n";
    }
    const fs::path full = fs::path(root_) / "MANIFEST";
    std::ofstream f(full, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + full.string() + "' for writing");
    f << out;
}

namespace {

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

std::string acc_field(const std::optional<double>& v) {
    return v ? fmt("%.6f", *v) : "";
}

nlohmann::json metrics_json(const MetricsReport& m) {
    nlohmann::json j;
    j["overall"] = m.overall;
    j["head"] = m.head ? nlohmann::json(*m.head) : nlohmann::json(nullptr);
    j["medium"] = m.medium ? nlohmann::json(*m.medium) : nlohmann::json(nullptr);
    j["tail"] = m.tail ? nlohmann::json(*m.tail) : nlohmann::json(nullptr);
    j["per_class"] = m.per_class;
    j["confusion"] = m.confusion;
    return j;
}

nlohmann::json record_json(const RunRecord& r, const ExperimentConfig& cfg,
                           const std::string& ckpt_file, const std::string& ckpt_hash) {
    nlohmann::json j;
    j["stage"] = r.stage;
    j["epoch_losses"] = r.epoch_losses;
    j["step_losses"] = r.step_losses;
    j["checkpoint"] = {{"file", ckpt_file}, {"hash", ckpt_hash}};
    j["config"] = cfg.serialize();
    return j;
}

void save_checkpoint_artifact(ArtifactDir& dir, const std::string& rel, const ModelState& model,
                              std::string& hash_out) {
    save_checkpoint(dir.path_of(rel), model);
    dir.note(rel);
    hash_out = hash_hex(fnv1a_file(dir.path_of(rel)));
}

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const size_t count = std::min<size_t>(static_cast<size_t>(jobs), n);
    pool.reserve(count);
    for (size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace

TrainArtifacts run_train(const ExperimentConfig& cfg, const std::string& out_dir,
                         const std::string& stage1_checkpoint) {
    cfg.validate();
    ArtifactDir dir(out_dir);

    const DatasetBundle data = cfg.make_dataset();
    const SplitPartition partition = cfg.make_partition(data.counts);
    const BackboneSpec spec = cfg.make_backbone();
    const TrainSchedule sched = cfg.make_schedule();

    TrainArtifacts art;
    std::string stage1_hash;
    if (stage1_checkpoint.empty()) {
        log_info("stage I: " + std::to_string(sched.stage1_epochs) + " epochs over " +
                 std::to_string(data.counts.total()) + " samples");
        auto [model, record] = train_stage1(data, spec, sched, cfg.classifier_bias);
        art.stage1 = std::move(model);
        art.record_stage1 = std::move(record);
    } else {
        log_info("stage I: resuming from " + stage1_checkpoint);
        art.stage1 = init_model(spec, data.num_classes(), sched.seed, cfg.classifier_bias);
        load_checkpoint(stage1_checkpoint, art.stage1);
        art.record_stage1.stage = "stage1";
    }
    save_checkpoint_artifact(dir, "stage1.ckpt", art.stage1, stage1_hash);
    dir.write_text("record_stage1.json",
                   record_json(art.record_stage1, cfg, "stage1.ckpt", stage1_hash).dump(2) + "\n");

    log_info("stage II: p=" + fmt("%g", cfg.fusion_p) + " strategy=" + cfg.fusion_strategy +
             " fusing=" + cfg.fusing_branch);
    auto [model2, record2] = finetune_stage2_h2t(art.stage1, data, sched, cfg.fusion_p,
                                                 cfg.selection(), cfg.fusing_kind(),
                                                 cfg.fused_kind());
    art.stage2 = std::move(model2);
    art.record_stage2 = std::move(record2);

    std::string stage2_hash;
    save_checkpoint_artifact(dir, "stage2.ckpt", art.stage2, stage2_hash);
    dir.write_text("record_stage2.json",
                   record_json(art.record_stage2, cfg, "stage2.ckpt", stage2_hash).dump(2) + "\n");

    art.metrics = evaluate(art.stage2, data, partition);
    dir.write_text("metrics.json", metrics_json(art.metrics).dump(2) + "\n");
    dir.write_text("config.toml", cfg.serialize());
    dir.write_manifest();
    log_info("overall accuracy " + fmt("%.4f", art.metrics.overall) + ", artifacts in " +
             dir.root());
    return art;
}

namespace {

struct PointSpec {
    std::string value; // axis value, formatted
    uint64_t seed = 0;
    ExperimentConfig cfg; // stage-II relevant fields overridden
    std::string subdir;
};

// Shared stage-II machinery for sweeps: one stage-I model, many finetunes.
SweepResult run_points(const ExperimentConfig& base, const std::string& out_dir,
                       const std::string& axis, const std::vector<PointSpec>& points, int jobs) {
    base.validate();
    ArtifactDir dir(out_dir);

    const DatasetBundle data = base.make_dataset();
    const SplitPartition partition = base.make_partition(data.counts);
    const TrainSchedule base_sched = base.make_schedule();

    log_info("sweep: training shared stage-I model");
    auto [stage1, record1] = train_stage1(data, base.make_backbone(), base_sched,
                                          base.classifier_bias);
    std::string stage1_hash;
    save_checkpoint_artifact(dir, "stage1.ckpt", stage1, stage1_hash);
    dir.write_text("record_stage1.json",
                   record_json(record1, base, "stage1.ckpt", stage1_hash).dump(2) + "\n");

    std::vector<MetricsReport> results(points.size());
    std::vector<std::string> sub_files(points.size());
    parallel_for(points.size(), jobs, [&](size_t i) {
        const PointSpec& pt = points[i];
        TrainSchedule sched = pt.cfg.make_schedule();
        sched.seed = pt.seed;
        log_info("point " + pt.subdir);
        auto [model2, record2] = finetune_stage2_h2t(stage1, data, sched, pt.cfg.fusion_p,
                                                     pt.cfg.selection(), pt.cfg.fusing_kind(),
                                                     pt.cfg.fused_kind());
        results[i] = evaluate(model2, data, partition);

        ArtifactDir sub(dir.path_of(pt.subdir));
        std::string hash;
        save_checkpoint_artifact(sub, "stage2.ckpt", model2, hash);
        sub.write_text("record_stage2.json",
                       record_json(record2, pt.cfg, "stage2.ckpt", hash).dump(2) + "\n");
        sub.write_text("metrics.json", metrics_json(results[i]).dump(2) + "\n");
        sub.write_manifest();
    });
    for (size_t i = 0; i < points.size(); ++i) {
        dir.note(points[i].subdir + "/stage2.ckpt");
        dir.note(points[i].subdir + "/record_stage2.json");
        dir.note(points[i].subdir + "/metrics.json");
    }

    // Data rows grouped by axis value, each group followed by its median row.
    SweepResult sweep;
    sweep.axis = axis;
    std::vector<std::string> value_order;
    for (const PointSpec& pt : points) {
        if (std::find(value_order.begin(), value_order.end(), pt.value) == value_order.end()) {
            value_order.push_back(pt.value);
        }
    }
    for (const std::string& value : value_order) {
        std::vector<double> overall, head, med, tail;
        MetricsReport median_row;
        for (size_t i = 0; i < points.size(); ++i) {
            if (points[i].value != value) continue;
            sweep.rows.push_back({value, std::to_string(points[i].seed), results[i]});
            overall.push_back(results[i].overall);
            if (results[i].head) head.push_back(*results[i].head);
            if (results[i].medium) med.push_back(*results[i].medium);
            if (results[i].tail) tail.push_back(*results[i].tail);
        }
        median_row.overall = median(overall);
        if (!head.empty()) median_row.head = median(head);
        if (!med.empty()) median_row.medium = median(med);
        if (!tail.empty()) median_row.tail = median(tail);
        sweep.rows.push_back({value, "median", median_row});
    }

    std::string csv = axis + ",seed,head,med,tail,all\n";
    for (const SweepRow& row : sweep.rows) {
        csv += row.value + "," + row.seed + "," + acc_field(row.metrics.head) + "," +
               acc_field(row.metrics.medium) + "," + acc_field(row.metrics.tail) + "," +
               fmt("%.6f", row.metrics.overall) + "\n";
    }
    dir.write_text("sweep.csv", csv);
    dir.write_text("config.toml", base.serialize());
    dir.write_manifest();
    return sweep;
}

} // namespace

SweepResult run_sweep_p(const ExperimentConfig& cfg, const std::string& out_dir,
                        const std::vector<double>& p_values, const std::vector<uint64_t>& seeds,
                        int jobs) {
    if (p_values.empty() || seeds.empty()) {
        throw ValidationError("sweep-p: need at least one p value and one seed");
    }
    std::vector<PointSpec> points;
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ValidationError("sweep-p: p " + std::to_string(p) + " outside [0, 1]");
        }
        for (uint64_t seed : seeds) {
            PointSpec pt;
            pt.value = fmt("%g", p);
            pt.seed = seed;
            pt.cfg = cfg;
            pt.cfg.fusion_p = p;
            pt.subdir = "p" + pt.value + "_s" + std::to_string(seed);
            points.push_back(std::move(pt));
        }
    }
    return run_points(cfg, out_dir, "p", points, jobs);
}

SweepResult run_ablate_sampler(const ExperimentConfig& cfg, const std::string& out_dir,
                               const std::vector<SamplerKind>& kinds,
                               const std::vector<uint64_t>& seeds, int jobs) {
    if (kinds.empty() || seeds.empty()) {
        throw ValidationError("ablate-sampler: need at least one kind and one seed");
    }
    ExperimentConfig base = cfg;
    base.fused_branch = "class_balanced"; // the ablation varies the fusing branch only
    std::vector<PointSpec> points;
    for (SamplerKind kind : kinds) {
        for (uint64_t seed : seeds) {
            PointSpec pt;
            pt.value = sampler_name(kind);
            pt.seed = seed;
            pt.cfg = base;
            pt.cfg.fusing_branch = sampler_name(kind);
            pt.subdir = pt.value + "_s" + std::to_string(seed);
            points.push_back(std::move(pt));
        }
    }
    return run_points(base, out_dir, "sampler", points, jobs);
}

SweepResult run_ablate_selection(const ExperimentConfig& cfg, const std::string& out_dir,
                                 const std::vector<SelectionStrategy>& strategies,
                                 const std::vector<uint64_t>& seeds, int jobs) {
    if (strategies.empty() || seeds.empty()) {
        throw ValidationError("ablate-selection: need at least one strategy and one seed");
    }
    std::vector<PointSpec> points;
    for (SelectionStrategy strategy : strategies) {
        // deterministic selections do not vary with the mask stream; one run
        const bool deterministic = strategy != SelectionStrategy::Random;
        const std::vector<uint64_t> use_seeds =
            deterministic ? std::vector<uint64_t>{seeds.front()} : seeds;
        for (uint64_t seed : use_seeds) {
            PointSpec pt;
            pt.value = strategy_name(strategy);
            pt.seed = seed;
            pt.cfg = cfg;
            pt.cfg.fusion_strategy = strategy_name(strategy);
            pt.subdir = pt.value + "_s" + std::to_string(seed);
            points.push_back(std::move(pt));
        }
    }
    return run_points(cfg, out_dir, "strategy", points, jobs);
}

void run_gen_data(const ExperimentConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    ArtifactDir dir(out_dir);
    const DatasetBundle data = cfg.make_dataset();
    save_dataset(dir.path_of("dataset.tens"), data);
    dir.note("dataset.tens");
    dir.note("dataset.tens.json");
    dir.write_text("config.toml", cfg.serialize());
    dir.write_manifest();
    log_info("dataset with " + std::to_string(data.counts.total()) + " train samples in " +
             dir.root());
}

namespace {

std::string histogram_csv(const std::vector<double>& hist, const SplitPartition& partition) {
    std::string csv = "class,split,frequency\n";
    for (size_t c = 0; c < hist.size(); ++c) {
        csv += std::to_string(c) + "," + split_name(partition.assignment[c]) + "," +
               fmt("%.17g", hist[c]) + "\n";
    }
    return csv;
}

std::string opt_field(const std::optional<double>& v) {
    return v ? fmt("%.9g", *v) : "";
}

// Cycling 10-color palette for class labels.
const char* kPalette[10] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string boundary_svg(const std::vector<int>& grid, int64_t resolution,
                         const GridBounds& bounds, const Tensor& points,
                         const std::vector<int>& labels) {
    const double size = 600.0;
    const double cell = size / static_cast<double>(resolution);
    auto sx = [&](double x) {
        return (x - bounds.xmin) / (bounds.xmax - bounds.xmin) * size;
    };
    auto sy = [&](double y) {
        // svg y grows downward
        return size - (y - bounds.ymin) / (bounds.ymax - bounds.ymin) * size;
    };
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" "
                      "viewBox=\"0 0 600 600\">\n";
    const double dx = (bounds.xmax - bounds.xmin) / static_cast<double>(resolution - 1);
    const double dy = (bounds.ymax - bounds.ymin) / static_cast<double>(resolution - 1);
    size_t k = 0;
    for (int64_t iy = 0; iy < resolution; ++iy) {
        for (int64_t ix = 0; ix < resolution; ++ix, ++k) {
            const double x = bounds.xmin + static_cast<double>(ix) * dx;
            const double y = bounds.ymin + static_cast<double>(iy) * dy;
            svg += "<rect x=\"" + fmt("%.2f", sx(x) - cell / 2) + "\" y=\"" +
                   fmt("%.2f", sy(y) - cell / 2) + "\" width=\"" + fmt("%.2f", cell) +
                   "\" height=\"" + fmt("%.2f", cell) + "\" fill=\"" +
                   kPalette[grid[k] % 10] + "\" fill-opacity=\"0.35\"/>\n";
        }
    }
    for (int64_t i = 0; i < points.shape[0]; ++i) {
        svg += "<circle cx=\"" + fmt("%.2f", sx(points.at(i, 0))) + "\" cy=\"" +
               fmt("%.2f", sy(points.at(i, 1))) + "\" r=\"2.5\" fill=\"" +
               kPalette[labels[static_cast<size_t>(i)] % 10] +
               "\" stroke=\"#333333\" stroke-width=\"0.4\"/>\n";
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace

void run_diagnose(const std::string& run_dir) {
    const std::string cfg_path = (fs::path(run_dir) / "config.toml").string();
    if (!fs::exists(cfg_path)) {
        throw IoError("run directory '" + run_dir + "' has no config.toml");
    }
    const ExperimentConfig cfg = ExperimentConfig::from_file(cfg_path);
    cfg.validate();
    for (const char* ckpt : {"stage1.ckpt", "stage2.ckpt"}) {
        if (!fs::exists(fs::path(run_dir) / ckpt)) {
            throw IoError("run directory '" + run_dir + "' is missing " + std::string(ckpt));
        }
    }

    const DatasetBundle data = cfg.make_dataset();
    const SplitPartition partition = cfg.make_partition(data.counts);
    const BackboneSpec spec = cfg.make_backbone();
    const TrainSchedule sched = cfg.make_schedule();

    ModelState stage1 = init_model(spec, data.num_classes(), sched.seed, cfg.classifier_bias);
    load_checkpoint((fs::path(run_dir) / "stage1.ckpt").string(), stage1);
    ModelState stage2 = init_model(spec, data.num_classes(), sched.seed, cfg.classifier_bias);
    load_checkpoint((fs::path(run_dir) / "stage2.ckpt").string(), stage2);

    ArtifactDir dir((fs::path(run_dir) / "diagnostics").string());

    // Predicted-label distribution over tail-class test samples, per stage.
    const auto hist1 = prediction_histogram(stage1, data.test_x, data.test_y, partition);
    const auto hist2 = prediction_histogram(stage2, data.test_x, data.test_y, partition);
    dir.write_text("hist_stage1.csv", histogram_csv(hist1, partition));
    dir.write_text("hist_stage2.csv", histogram_csv(hist2, partition));

    // Force proxies for every (head, tail) pair under the configured mask.
    {
        Rng mask_rng(mix_seed(cfg.dataset_seed, 0xD1A6u));
        const FusionMask mask =
            select_channels(spec.feature_dim, cfg.fusion_p, cfg.selection(), mask_rng);
        std::string csv =
            "head_class,tail_class,fused_head,fused_tail,retained_tail,retained_head,"
            "fused_gap,retained_gap\n";
        for (int64_t h : partition.classes_in(Split::Head)) {
            for (int64_t t : partition.classes_in(Split::Tail)) {
                const ForceProxies fp = rationale_measure(stage2, data, mask, h, t);
                csv += std::to_string(h) + "," + std::to_string(t) + "," +
                       opt_field(fp.fused_head) + "," + opt_field(fp.fused_tail) + "," +
                       opt_field(fp.retained_tail) + "," + opt_field(fp.retained_head) + "," +
                       opt_field(fp.fused_gap) + "," + opt_field(fp.retained_gap) + "\n";
            }
        }
        dir.write_text("forces.csv", csv);
    }

    // Embedding dump for external analysis.
    {
        NamedTensors nt;
        nt.add("train/f", compute_pooled_features(stage2, data.train_x));
        Tensor train_y = Tensor::zeros({static_cast<int64_t>(data.train_y.size())});
        for (size_t i = 0; i < data.train_y.size(); ++i) {
            train_y.at(static_cast<int64_t>(i)) = static_cast<float>(data.train_y[i]);
        }
        nt.add("train/y", std::move(train_y));
        nt.add("test/f", compute_pooled_features(stage2, data.test_x));
        Tensor test_y = Tensor::zeros({static_cast<int64_t>(data.test_y.size())});
        for (size_t i = 0; i < data.test_y.size(); ++i) {
            test_y.at(static_cast<int64_t>(i)) = static_cast<float>(data.test_y[i]);
        }
        nt.add("test/y", std::move(test_y));
        write_container(dir.path_of("embeddings.tens"), kTensorMagic, nt);
        dir.note("embeddings.tens");
    }

    if (cfg.in_dims == 2 && spec.input_width() == 2) {
        GridBounds bounds;
        bounds.xmin = bounds.ymin = 1e30;
        bounds.xmax = bounds.ymax = -1e30;
        for (int64_t i = 0; i < data.test_x.shape[0]; ++i) {
            bounds.xmin = std::min(bounds.xmin, static_cast<double>(data.test_x.at(i, 0)));
            bounds.xmax = std::max(bounds.xmax, static_cast<double>(data.test_x.at(i, 0)));
            bounds.ymin = std::min(bounds.ymin, static_cast<double>(data.test_x.at(i, 1)));
            bounds.ymax = std::max(bounds.ymax, static_cast<double>(data.test_x.at(i, 1)));
        }
        bounds.xmin -= 1.0;
        bounds.xmax += 1.0;
        bounds.ymin -= 1.0;
        bounds.ymax += 1.0;
        const int64_t resolution = 200;
        const std::vector<int> grid = boundary_grid(stage2, bounds, resolution);

        std::string csv = "x,y,label\n";
        const double dx = (bounds.xmax - bounds.xmin) / static_cast<double>(resolution - 1);
        const double dy = (bounds.ymax - bounds.ymin) / static_cast<double>(resolution - 1);
        size_t k = 0;
        for (int64_t iy = 0; iy < resolution; ++iy) {
            for (int64_t ix = 0; ix < resolution; ++ix, ++k) {
                csv += fmt("%.9g", bounds.xmin + static_cast<double>(ix) * dx) + "," +
                       fmt("%.9g", bounds.ymin + static_cast<double>(iy) * dy) + "," +
                       std::to_string(grid[k]) + "\n";
            }
        }
        dir.write_text("boundary.csv", csv);
        dir.write_text("boundary.svg",
                       boundary_svg(grid, resolution, bounds, data.test_x, data.test_y));
    } else {
        log_info("boundary grid skipped: inputs are " + std::to_string(cfg.in_dims) +
                 "-D, grids need 2-D");
    }

    dir.write_manifest();
    log_info("diagnostics in " + dir.root());
}

} // namespace h2t
