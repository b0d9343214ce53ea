#include "h2t/model.hpp"

#include <cmath>

#include "h2t/errors.hpp"
#include "h2t/serialize.hpp"

namespace h2t {

void BackboneSpec::validate() const {
    if (feature_dim < 1) throw ValidationError("backbone feature_dim must be >= 1");
    if (kind == BackboneKind::Mlp) {
        if (in_dims < 1) throw ValidationError("mlp in_dims must be >= 1");
        for (int64_t h : hidden) {
            if (h < 1) throw ValidationError("mlp hidden widths must be >= 1");
        }
    } else {
        if (in_channels < 1) throw ValidationError("tinyconv in_channels must be >= 1");
        if (conv1_channels < 1) throw ValidationError("tinyconv conv1_channels must be >= 1");
        if (in_h < 4 || in_w < 4 || in_h % 4 != 0 || in_w % 4 != 0) {
            throw ValidationError("tinyconv input extents must be multiples of 4, got " +
                                  std::to_string(in_h) + "x" + std::to_string(in_w));
        }
    }
}

int64_t BackboneSpec::input_width() const {
    return kind == BackboneKind::Mlp ? in_dims : in_channels * in_h * in_w;
}

int64_t BackboneSpec::map_h() const {
    return kind == BackboneKind::Mlp ? 1 : in_h / 4;
}

int64_t BackboneSpec::map_w() const {
    return kind == BackboneKind::Mlp ? 1 : in_w / 4;
}

namespace {

Tensor he_uniform(const std::vector<int64_t>& shape, int64_t fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& v : t.data) v = static_cast<float>(rng.uniform(-limit, limit));
    return t;
}

void finish_forward(const Graph& g, const BackboneOut& out) {
    if (!g.value(out.feature_map).all_finite() || !g.value(out.pooled).all_finite()) {
        throw NumericError("non-finite activation in backbone forward");
    }
}

} // namespace

ModelState init_model(const BackboneSpec& spec, int64_t num_classes, uint64_t seed,
                      bool classifier_bias) {
    spec.validate();
    if (num_classes < 2) throw ValidationError("need at least 2 classes");

    ModelState m;
    m.spec = spec;
    m.num_classes = num_classes;

    Rng rng(mix_seed(seed, 0x1217'11A7u));
    if (spec.kind == BackboneKind::Mlp) {
        std::vector<int64_t> widths;
        widths.push_back(spec.in_dims);
        widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
        widths.push_back(spec.feature_dim);
        for (size_t l = 0; l + 1 < widths.size(); ++l) {
            const std::string tag = "layer" + std::to_string(l);
            m.backbone.add(tag + "/W", he_uniform({widths[l], widths[l + 1]}, widths[l], rng));
            m.backbone.add(tag + "/b", Tensor::zeros({widths[l + 1]}));
        }
    } else {
        m.backbone.add("conv1/K",
                       he_uniform({spec.conv1_channels, spec.in_channels, 3, 3},
                                  spec.in_channels * 9, rng));
        m.backbone.add("conv1/b", Tensor::zeros({spec.conv1_channels}));
        m.backbone.add("conv2/K",
                       he_uniform({spec.feature_dim, spec.conv1_channels, 3, 3},
                                  spec.conv1_channels * 9, rng));
        m.backbone.add("conv2/b", Tensor::zeros({spec.feature_dim}));
    }
    m.classifier.add("W", he_uniform({spec.feature_dim, num_classes}, spec.feature_dim, rng));
    m.classifier.add("b", Tensor::zeros({num_classes}), classifier_bias);
    return m;
}

ModelBinding bind_model(Graph& g, const ModelState& model, bool force_grad) {
    ModelBinding b;
    for (const auto& [name, p] : model.backbone) {
        b.backbone_ids[name] = g.leaf(p.value, force_grad || p.trainable);
    }
    for (const auto& [name, p] : model.classifier) {
        b.classifier_ids[name] = g.leaf(p.value, force_grad || p.trainable);
    }
    return b;
}

void harvest_grads(const Graph& g, const ModelBinding& binding, ModelState& model) {
    for (auto& [name, p] : model.backbone) {
        const int id = binding.backbone_ids.at(name);
        if (!g.has_grad(id)) continue;
        const Tensor& gt = g.grad(id);
        for (size_t i = 0; i < gt.data.size(); ++i) p.grad.data[i] += gt.data[i];
    }
    for (auto& [name, p] : model.classifier) {
        const int id = binding.classifier_ids.at(name);
        if (!g.has_grad(id)) continue;
        const Tensor& gt = g.grad(id);
        for (size_t i = 0; i < gt.data.size(); ++i) p.grad.data[i] += gt.data[i];
    }
}

BackboneOut backbone_forward(Graph& g, const ModelBinding& binding, const ModelState& model,
                             const Tensor& x) {
    const BackboneSpec& spec = model.spec;
    if (x.rank() != 2 || x.shape[1] != spec.input_width()) {
        throw ShapeError("backbone input: expected (batch, " +
                         std::to_string(spec.input_width()) + "), got " + x.shape_str());
    }
    const int64_t B = x.shape[0];

    BackboneOut out;
    if (spec.kind == BackboneKind::Mlp) {
        int h = g.leaf(x, false);
        const size_t layers = spec.hidden.size() + 1;
        for (size_t l = 0; l < layers; ++l) {
            const std::string tag = "layer" + std::to_string(l);
            h = g.linear(h, binding.backbone_ids.at(tag + "/W"),
                         binding.backbone_ids.at(tag + "/b"));
            h = g.relu(h);
        }
        out.feature_map = g.reshape(h, {B, spec.feature_dim, 1, 1});
        out.pooled = g.global_avg_pool(out.feature_map);
        finish_forward(g, out);
        return out;
    }

    Tensor img(x.shape, x.data);
    img.shape = {B, spec.in_channels, spec.in_h, spec.in_w};
    int h = g.leaf(img, false);
    h = g.conv2d(h, binding.backbone_ids.at("conv1/K"), binding.backbone_ids.at("conv1/b"), 1);
    h = g.relu(h);
    h = g.maxpool2(h);
    h = g.conv2d(h, binding.backbone_ids.at("conv2/K"), binding.backbone_ids.at("conv2/b"), 1);
    h = g.relu(h);
    h = g.maxpool2(h);
    out.feature_map = h;
    out.pooled = g.global_avg_pool(h);
    finish_forward(g, out);
    return out;
}

int classifier_forward(Graph& g, const ModelBinding& binding, const ModelState& model, int pooled) {
    const Tensor& f = g.value(pooled);
    if (f.rank() != 2 || f.shape[1] != model.spec.feature_dim) {
        throw ShapeError("classifier input: expected (batch, " +
                         std::to_string(model.spec.feature_dim) + "), got " + f.shape_str());
    }
    return g.linear(pooled, binding.classifier_ids.at("W"), binding.classifier_ids.at("b"));
}

Graph::Loss model_loss(Graph& g, const ModelBinding& binding, const ModelState& model,
                       const Tensor& x, const std::vector<int>& labels) {
    BackboneOut bo = backbone_forward(g, binding, model, x);
    int z = classifier_forward(g, binding, model, bo.pooled);
    return g.softmax_xent(z, labels);
}

void save_checkpoint(const std::string& path, const ModelState& model) {
    NamedTensors nt;
    for (const auto& [name, p] : model.backbone) nt.add("backbone/" + name, p.value);
    for (const auto& [name, p] : model.classifier) nt.add("classifier/" + name, p.value);
    write_container(path, kCheckpointMagic, nt);
}

void load_checkpoint(const std::string& path, ModelState& model) {
    NamedTensors nt = read_container(path, kCheckpointMagic);
    for (auto& [name, p] : model.backbone) {
        const Tensor& stored = nt.get("backbone/" + name);
        require_shape(stored, p.value.shape, "checkpoint backbone/" + name);
        p.value = stored;
    }
    for (auto& [name, p] : model.classifier) {
        const Tensor& stored = nt.get("classifier/" + name);
        require_shape(stored, p.value.shape, "checkpoint classifier/" + name);
        p.value = stored;
    }
}

} // namespace h2t
