#include "h2t/data.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "h2t/errors.hpp"
#include "h2t/rng.hpp"
#include "h2t/serialize.hpp"

namespace h2t {

int64_t ClassCounts::total() const {
    int64_t n = 0;
    for (int64_t c : counts) n += c;
    return n;
}

void ClassCounts::validate() const {
    if (counts.size() < 1) throw ValidationError("class counts empty");
    for (size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 1) {
            throw ValidationError("class " + std::to_string(i) + " has count " +
                                  std::to_string(counts[i]) + ", must be >= 1");
        }
        if (i > 0 && counts[i] > counts[i - 1]) {
            throw ValidationError("counts must be non-increasing, class " + std::to_string(i) +
                                  " breaks the order");
        }
    }
}

ClassCounts longtail_counts(int64_t n_max, double rho, int64_t num_classes) {
    if (num_classes < 2) throw ValidationError("longtail_counts: need at least 2 classes");
    if (rho < 1.0) throw ValidationError("longtail_counts: imbalance ratio must be >= 1");
    if (static_cast<double>(n_max) < rho) {
        throw ValidationError("longtail_counts: rho " + std::to_string(rho) + " exceeds n_max " +
                              std::to_string(n_max) + " (smallest class would be empty)");
    }
    ClassCounts cc;
    cc.counts.resize(static_cast<size_t>(num_classes));
    for (int64_t i = 0; i < num_classes; ++i) {
        const double expo = -static_cast<double>(i) / static_cast<double>(num_classes - 1);
        cc.counts[static_cast<size_t>(i)] =
            static_cast<int64_t>(std::floor(static_cast<double>(n_max) * std::pow(rho, expo)));
    }
    cc.validate();
    return cc;
}

std::vector<int64_t> SplitPartition::classes_in(Split s) const {
    std::vector<int64_t> out;
    for (size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] == s) out.push_back(static_cast<int64_t>(i));
    }
    return out;
}

bool SplitPartition::has(Split s) const {
    for (Split a : assignment) {
        if (a == s) return true;
    }
    return false;
}

SplitPartition partition_splits(const ClassCounts& counts, double head_threshold,
                                double tail_threshold) {
    counts.validate();
    if (!(head_threshold > tail_threshold) || tail_threshold < 0.0) {
        throw ValidationError("partition thresholds inverted: head " +
                              std::to_string(head_threshold) + " must exceed tail " +
                              std::to_string(tail_threshold));
    }
    SplitPartition p;
    p.head_threshold = head_threshold;
    p.tail_threshold = tail_threshold;
    p.assignment.reserve(counts.counts.size());
    for (int64_t n : counts.counts) {
        if (static_cast<double>(n) > head_threshold) {
            p.assignment.push_back(Split::Head);
        } else if (static_cast<double>(n) <= tail_threshold) {
            p.assignment.push_back(Split::Tail);
        } else {
            p.assignment.push_back(Split::Medium);
        }
    }
    return p;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::Head: return "head";
        case Split::Medium: return "medium";
        case Split::Tail: return "tail";
    }
    return "?";
}

void DatasetBundle::validate() const {
    counts.validate();
    const int64_t C = counts.num_classes();
    const int64_t N = counts.total();
    if (train_x.rank() != 2 || train_x.shape[0] != N) {
        throw ValidationError("train features shape " + train_x.shape_str() + " does not hold " +
                              std::to_string(N) + " samples");
    }
    if (static_cast<int64_t>(train_y.size()) != N) {
        throw ValidationError("train label count mismatch");
    }
    std::vector<int64_t> freq(static_cast<size_t>(C), 0);
    for (int y : train_y) {
        if (y < 0 || y >= C) throw ValidationError("train label out of range");
        ++freq[static_cast<size_t>(y)];
    }
    for (int64_t c = 0; c < C; ++c) {
        if (freq[static_cast<size_t>(c)] != counts.counts[static_cast<size_t>(c)]) {
            throw ValidationError("class " + std::to_string(c) + " holds " +
                                  std::to_string(freq[static_cast<size_t>(c)]) +
                                  " samples, counts say " +
                                  std::to_string(counts.counts[static_cast<size_t>(c)]));
        }
    }
    for (int y : test_y) {
        if (y < 0 || y >= C) throw ValidationError("test label out of range");
    }
    if (test_x.rank() != 2 || test_x.shape[0] != static_cast<int64_t>(test_y.size())) {
        throw ValidationError("test features/labels mismatch");
    }
}

std::vector<std::vector<int64_t>> DatasetBundle::class_index() const {
    std::vector<std::vector<int64_t>> idx(static_cast<size_t>(num_classes()));
    for (size_t i = 0; i < train_y.size(); ++i) {
        idx[static_cast<size_t>(train_y[i])].push_back(static_cast<int64_t>(i));
    }
    return idx;
}

DatasetBundle synth_gaussian_longtail(const ClassCounts& counts, int64_t in_dims,
                                      double separation, uint64_t seed, int64_t test_per_class) {
    counts.validate();
    if (in_dims < 2) throw ValidationError("synth dataset needs in_dims >= 2");
    if (!(separation > 0.0)) throw ValidationError("synth dataset needs separation > 0");
    if (test_per_class < 1) throw ValidationError("synth dataset needs test_per_class >= 1");

    const int64_t C = counts.num_classes();
    const int64_t N = counts.total();

    DatasetBundle ds;
    ds.counts = counts;
    ds.meta.seed = seed;
    ds.meta.separation = separation;
    ds.meta.in_dims = in_dims;
    ds.meta.test_per_class = test_per_class;

    // Means uniform on the sphere of radius `separation`.
    Rng mean_rng(mix_seed(seed, 0x4D45414Eu)); // "MEAN"
    ds.meta.class_means = Tensor::zeros({C, in_dims});
    for (int64_t c = 0; c < C; ++c) {
        double norm_sq = 0.0;
        std::vector<double> v(static_cast<size_t>(in_dims));
        for (int64_t d = 0; d < in_dims; ++d) {
            v[static_cast<size_t>(d)] = mean_rng.normal();
            norm_sq += v[static_cast<size_t>(d)] * v[static_cast<size_t>(d)];
        }
        const double scale = separation / std::sqrt(norm_sq);
        for (int64_t d = 0; d < in_dims; ++d) {
            ds.meta.class_means.at(c, d) = static_cast<float>(v[static_cast<size_t>(d)] * scale);
        }
    }

    Rng train_rng(mix_seed(seed, 0x545241494Eu)); // "TRAIN"
    ds.train_x = Tensor::zeros({N, in_dims});
    ds.train_y.reserve(static_cast<size_t>(N));
    int64_t row = 0;
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t k = 0; k < counts.counts[static_cast<size_t>(c)]; ++k, ++row) {
            for (int64_t d = 0; d < in_dims; ++d) {
                ds.train_x.at(row, d) =
                    ds.meta.class_means.at(c, d) + static_cast<float>(train_rng.normal());
            }
            ds.train_y.push_back(static_cast<int>(c));
        }
    }

    Rng test_rng(mix_seed(seed, 0x54455354u)); // "TEST"
    ds.test_x = Tensor::zeros({C * test_per_class, in_dims});
    ds.test_y.reserve(static_cast<size_t>(C * test_per_class));
    row = 0;
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t k = 0; k < test_per_class; ++k, ++row) {
            for (int64_t d = 0; d < in_dims; ++d) {
                ds.test_x.at(row, d) =
                    ds.meta.class_means.at(c, d) + static_cast<float>(test_rng.normal());
            }
            ds.test_y.push_back(static_cast<int>(c));
        }
    }

    ds.validate();
    return ds;
}

namespace {

Tensor labels_to_tensor(const std::vector<int>& y) {
    Tensor t = Tensor::zeros({static_cast<int64_t>(y.size())});
    for (size_t i = 0; i < y.size(); ++i) t.at(static_cast<int64_t>(i)) = static_cast<float>(y[i]);
    return t;
}

std::vector<int> tensor_to_labels(const Tensor& t) {
    std::vector<int> y(t.data.size());
    for (size_t i = 0; i < t.data.size(); ++i) y[i] = static_cast<int>(t.data[i]);
    return y;
}

} // namespace

void save_dataset(const std::string& path, const DatasetBundle& ds) {
    ds.validate();
    NamedTensors nt;
    nt.add("train/x", ds.train_x);
    nt.add("train/y", labels_to_tensor(ds.train_y));
    nt.add("test/x", ds.test_x);
    nt.add("test/y", labels_to_tensor(ds.test_y));
    Tensor counts_t = Tensor::zeros({ds.counts.num_classes()});
    for (int64_t c = 0; c < ds.counts.num_classes(); ++c) {
        counts_t.at(c) = static_cast<float>(ds.counts.counts[static_cast<size_t>(c)]);
    }
    nt.add("meta/counts", counts_t);
    nt.add("meta/class_means", ds.meta.class_means);
    write_container(path, kTensorMagic, nt);

    nlohmann::json j;
    j["seed"] = ds.meta.seed;
    j["separation"] = ds.meta.separation;
    j["in_dims"] = ds.meta.in_dims;
    j["test_per_class"] = ds.meta.test_per_class;
    j["counts"] = ds.counts.counts;
    j["count_profile"] = "exponential"; // n_i = floor(n_max * rho^(-i/(C-1)))
    std::vector<std::vector<float>> means;
    for (int64_t c = 0; c < ds.counts.num_classes(); ++c) {
        std::vector<float> m(static_cast<size_t>(ds.meta.in_dims));
        for (int64_t d = 0; d < ds.meta.in_dims; ++d) m[static_cast<size_t>(d)] = ds.meta.class_means.at(c, d);
        means.push_back(std::move(m));
    }
    j["class_means"] = means;
    std::ofstream f(path + ".json", std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + ".json' for writing");
    f << j.dump(2) << "\n";
}

DatasetBundle load_dataset(const std::string& path) {
    NamedTensors nt = read_container(path, kTensorMagic);

    std::ifstream f(path + ".json");
    if (!f) throw IoError("missing dataset sidecar '" + path + ".json'");
    nlohmann::json j;
    f >> j;

    DatasetBundle ds;
    ds.train_x = nt.get("train/x");
    ds.train_y = tensor_to_labels(nt.get("train/y"));
    ds.test_x = nt.get("test/x");
    ds.test_y = tensor_to_labels(nt.get("test/y"));
    const Tensor& counts_t = nt.get("meta/counts");
    for (float v : counts_t.data) ds.counts.counts.push_back(static_cast<int64_t>(v));
    ds.meta.class_means = nt.get("meta/class_means");
    ds.meta.seed = j.at("seed").get<uint64_t>();
    ds.meta.separation = j.at("separation").get<double>();
    ds.meta.in_dims = j.at("in_dims").get<int64_t>();
    ds.meta.test_per_class = j.at("test_per_class").get<int64_t>();

    const auto json_counts = j.at("counts").get<std::vector<int64_t>>();
    if (json_counts != ds.counts.counts) {
        throw ValidationError("dataset sidecar counts disagree with container counts");
    }
    ds.validate();
    return ds;
}

} // namespace h2t
