#include "h2t/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "h2t/errors.hpp"

namespace h2t {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Strip a trailing comment, honoring quoted strings.
std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Field {
    std::string section;
    std::string key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

int64_t parse_i64(const std::string& raw, const std::string& where) {
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected integer, got '" + raw + "'");
    }
}

uint64_t parse_u64(const std::string& raw, const std::string& where) {
    try {
        size_t pos = 0;
        const uint64_t v = std::stoull(raw, &pos);
        if (pos != raw.size() || raw.find('-') != std::string::npos) {
            throw std::invalid_argument("trailing");
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected unsigned integer, got '" + raw + "'");
    }
}

double parse_f64(const std::string& raw, const std::string& where) {
    try {
        size_t pos = 0;
        const double v = std::stod(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected number, got '" + raw + "'");
    }
}

bool parse_bool(const std::string& raw, const std::string& where) {
    if (raw == "true") return true;
    if (raw == "false") return false;
    throw ConfigError(where + ": expected true or false, got '" + raw + "'");
}

std::string parse_string(const std::string& raw, const std::string& where) {
    if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') {
        throw ConfigError(where + ": expected quoted string, got '" + raw + "'");
    }
    return raw.substr(1, raw.size() - 2);
}

std::vector<std::string> split_array(const std::string& raw, const std::string& where) {
    if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') {
        throw ConfigError(where + ": expected array [..], got '" + raw + "'");
    }
    std::vector<std::string> parts;
    std::string body = raw.substr(1, raw.size() - 2);
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) parts.push_back(item);
    }
    return parts;
}

// One schema drives both the parser and the serializer so the round trip
// cannot drift.
const std::vector<Field>& schema() {
    static const std::vector<Field> fields = [] {
        std::vector<Field> f;
        auto add_i64 = [&f](const char* sec, const char* key, int64_t ExperimentConfig::* mem) {
            f.push_back({sec, key,
                         [mem, sec, key](ExperimentConfig& c, const std::string& raw) {
                             c.*mem = parse_i64(raw, std::string("[") + sec + "] " + key);
                         },
                         [mem](const ExperimentConfig& c) { return std::to_string(c.*mem); }});
        };
        auto add_u64 = [&f](const char* sec, const char* key, uint64_t ExperimentConfig::* mem) {
            f.push_back({sec, key,
                         [mem, sec, key](ExperimentConfig& c, const std::string& raw) {
                             c.*mem = parse_u64(raw, std::string("[") + sec + "] " + key);
                         },
                         [mem](const ExperimentConfig& c) { return std::to_string(c.*mem); }});
        };
        auto add_f64 = [&f](const char* sec, const char* key, double ExperimentConfig::* mem) {
            f.push_back({sec, key,
                         [mem, sec, key](ExperimentConfig& c, const std::string& raw) {
                             c.*mem = parse_f64(raw, std::string("[") + sec + "] " + key);
                         },
                         [mem](const ExperimentConfig& c) { return fmt_double(c.*mem); }});
        };
        auto add_bool = [&f](const char* sec, const char* key, bool ExperimentConfig::* mem) {
            f.push_back({sec, key,
                         [mem, sec, key](ExperimentConfig& c, const std::string& raw) {
                             c.*mem = parse_bool(raw, std::string("[") + sec + "] " + key);
                         },
                         [mem](const ExperimentConfig& c) { return (c.*mem) ? "true" : "false"; }});
        };
        auto add_str = [&f](const char* sec, const char* key, std::string ExperimentConfig::* mem) {
            f.push_back({sec, key,
                         [mem, sec, key](ExperimentConfig& c, const std::string& raw) {
                             c.*mem = parse_string(raw, std::string("[") + sec + "] " + key);
                         },
                         [mem](const ExperimentConfig& c) { return "\"" + c.*mem + "\""; }});
        };
        auto add_i64_list = [&f](const char* sec, const char* key,
                                 std::vector<int64_t> ExperimentConfig::* mem) {
            f.push_back({sec, key,
                         [mem, sec, key](ExperimentConfig& c, const std::string& raw) {
                             const std::string where = std::string("[") + sec + "] " + key;
                             (c.*mem).clear();
                             for (const std::string& item : split_array(raw, where)) {
                                 (c.*mem).push_back(parse_i64(item, where));
                             }
                         },
                         [mem](const ExperimentConfig& c) {
                             std::string out = "[";
                             for (size_t i = 0; i < (c.*mem).size(); ++i) {
                                 if (i) out += ", ";
                                 out += std::to_string((c.*mem)[i]);
                             }
                             return out + "]";
                         }});
        };
        auto add_f64_list = [&f](const char* sec, const char* key,
                                 std::vector<double> ExperimentConfig::* mem) {
            f.push_back({sec, key,
                         [mem, sec, key](ExperimentConfig& c, const std::string& raw) {
                             const std::string where = std::string("[") + sec + "] " + key;
                             (c.*mem).clear();
                             for (const std::string& item : split_array(raw, where)) {
                                 (c.*mem).push_back(parse_f64(item, where));
                             }
                         },
                         [mem](const ExperimentConfig& c) {
                             std::string out = "[";
                             for (size_t i = 0; i < (c.*mem).size(); ++i) {
                                 if (i) out += ", ";
                                 out += fmt_double((c.*mem)[i]);
                             }
                             return out + "]";
                         }});
        };

        add_i64("dataset", "classes", &ExperimentConfig::classes);
        add_i64("dataset", "n_max", &ExperimentConfig::n_max);
        add_f64("dataset", "imbalance_ratio", &ExperimentConfig::imbalance_ratio);
        add_i64("dataset", "in_dims", &ExperimentConfig::in_dims);
        add_f64("dataset", "separation", &ExperimentConfig::separation);
        add_u64("dataset", "seed", &ExperimentConfig::dataset_seed);
        add_i64("dataset", "test_per_class", &ExperimentConfig::test_per_class);

        add_f64("splits", "head_threshold", &ExperimentConfig::head_threshold);
        add_f64("splits", "tail_threshold", &ExperimentConfig::tail_threshold);
        add_f64("splits", "threshold_scale", &ExperimentConfig::threshold_scale);

        add_str("backbone", "kind", &ExperimentConfig::backbone_kind);
        add_i64_list("backbone", "hidden", &ExperimentConfig::hidden);
        add_i64("backbone", "feature_dim", &ExperimentConfig::feature_dim);
        add_i64("backbone", "in_channels", &ExperimentConfig::in_channels);
        add_i64("backbone", "in_h", &ExperimentConfig::conv_in_h);
        add_i64("backbone", "in_w", &ExperimentConfig::conv_in_w);
        add_i64("backbone", "conv1_channels", &ExperimentConfig::conv1_channels);
        add_str("backbone", "init", &ExperimentConfig::init);
        add_bool("backbone", "classifier_bias", &ExperimentConfig::classifier_bias);

        add_i64("schedule", "stage1_epochs", &ExperimentConfig::stage1_epochs);
        add_i64("schedule", "stage2_epochs", &ExperimentConfig::stage2_epochs);
        add_f64("schedule", "stage1_lr", &ExperimentConfig::stage1_lr);
        add_f64("schedule", "stage2_lr", &ExperimentConfig::stage2_lr);
        add_f64("schedule", "momentum", &ExperimentConfig::momentum);
        add_f64("schedule", "weight_decay", &ExperimentConfig::weight_decay);
        add_i64("schedule", "batch_size", &ExperimentConfig::batch_size);
        add_f64_list("schedule", "milestones", &ExperimentConfig::milestones);
        add_f64("schedule", "decay_factor", &ExperimentConfig::decay_factor);
        add_u64("schedule", "seed", &ExperimentConfig::train_seed);
        add_bool("schedule", "reinit_classifier", &ExperimentConfig::reinit_classifier);

        add_f64("fusion", "p", &ExperimentConfig::fusion_p);
        add_str("fusion", "strategy", &ExperimentConfig::fusion_strategy);

        add_str("samplers", "fused_branch", &ExperimentConfig::fused_branch);
        add_str("samplers", "fusing_branch", &ExperimentConfig::fusing_branch);

        add_str("output", "dir", &ExperimentConfig::out_dir);
        return f;
    }();
    return fields;
}

} // namespace

ExperimentConfig ExperimentConfig::from_string(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string raw = trim(line.substr(eq + 1));
        bool found = false;
        for (const Field& fld : schema()) {
            if (fld.section == section && fld.key == key) {
                fld.set(cfg, raw);
                found = true;
                break;
            }
        }
        if (!found) {
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key [" + section +
                              "] " + key);
        }
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_string(text);
}

std::string ExperimentConfig::serialize() const {
    std::string out;
    std::string section;
    for (const Field& fld : schema()) {
        if (fld.section != section) {
            if (!out.empty()) out += "\n";
            section = fld.section;
            out += "[" + section + "]\n";
        }
        out += fld.key + " = " + fld.get(*this) + "\n";
    }
    return out;
}

void ExperimentConfig::validate() const {
    if (classes < 2) throw ConfigError("[dataset] classes: must be >= 2");
    if (n_max < 1) throw ConfigError("[dataset] n_max: must be >= 1");
    if (imbalance_ratio < 1.0) throw ConfigError("[dataset] imbalance_ratio: must be >= 1");
    if (imbalance_ratio > static_cast<double>(n_max)) {
        throw ConfigError("[dataset] imbalance_ratio: exceeds n_max, smallest class empty");
    }
    if (in_dims < 2) throw ConfigError("[dataset] in_dims: must be >= 2");
    if (!(separation > 0.0)) throw ConfigError("[dataset] separation: must be > 0");
    if (test_per_class < 1) throw ConfigError("[dataset] test_per_class: must be >= 1");
    if (!(threshold_scale > 0.0)) throw ConfigError("[splits] threshold_scale: must be > 0");
    if (!(head_threshold * threshold_scale > tail_threshold * threshold_scale) ||
        tail_threshold < 0.0) {
        throw ConfigError("[splits] thresholds: head must exceed tail (after scaling)");
    }
    if (backbone_kind != "mlp" && backbone_kind != "tinyconv") {
        throw ConfigError("[backbone] kind: expected \"mlp\" or \"tinyconv\"");
    }
    if (init != "he_uniform") {
        throw ConfigError("[backbone] init: only \"he_uniform\" is implemented");
    }
    if (backbone_kind == "tinyconv" && in_channels * conv_in_h * conv_in_w != in_dims) {
        throw ConfigError("[backbone] in_channels * in_h * in_w must equal [dataset] in_dims");
    }
    if (!(fusion_p >= 0.0 && fusion_p <= 1.0)) {
        throw ConfigError("[fusion] p: must be in [0, 1]");
    }
    strategy_from_name(fusion_strategy);
    sampler_from_name(fused_branch);
    sampler_from_name(fusing_branch);
    make_backbone().validate();
    make_schedule().validate();
}

ClassCounts ExperimentConfig::make_counts() const {
    return longtail_counts(n_max, imbalance_ratio, classes);
}

DatasetBundle ExperimentConfig::make_dataset() const {
    return synth_gaussian_longtail(make_counts(), in_dims, separation, dataset_seed,
                                   test_per_class);
}

SplitPartition ExperimentConfig::make_partition(const ClassCounts& counts) const {
    return partition_splits(counts, head_threshold * threshold_scale,
                            tail_threshold * threshold_scale);
}

BackboneSpec ExperimentConfig::make_backbone() const {
    BackboneSpec spec;
    spec.kind = backbone_kind == "mlp" ? BackboneKind::Mlp : BackboneKind::TinyConv;
    spec.in_dims = in_dims;
    spec.hidden = hidden;
    spec.in_channels = in_channels;
    spec.in_h = conv_in_h;
    spec.in_w = conv_in_w;
    spec.conv1_channels = conv1_channels;
    spec.feature_dim = feature_dim;
    return spec;
}

TrainSchedule ExperimentConfig::make_schedule() const {
    TrainSchedule s;
    s.stage1_epochs = stage1_epochs;
    s.stage2_epochs = stage2_epochs;
    s.stage1_lr = stage1_lr;
    s.stage2_lr = stage2_lr;
    s.momentum = momentum;
    s.weight_decay = weight_decay;
    s.batch_size = batch_size;
    s.milestones = milestones;
    s.decay_factor = decay_factor;
    s.seed = train_seed;
    s.reinit_classifier = reinit_classifier;
    return s;
}

} // namespace h2t
