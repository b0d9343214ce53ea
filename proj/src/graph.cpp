#include "h2t/graph.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "h2t/errors.hpp"

namespace h2t {

int Graph::add_node(Tensor value, std::vector<int> parents,
                    std::function<void(Graph&, int)> backprop) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backprop = std::move(backprop);
    for (int p : n.parents) {
        if (nodes_[static_cast<size_t>(p)].needs_grad) {
            n.needs_grad = true;
            break;
        }
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Graph::leaf(Tensor value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Graph::linear(int x, int W, int b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(W);
    if (xv.rank() != 2 || wv.rank() != 2) {
        throw ShapeError("linear: expected rank-2 input and weight, got " + xv.shape_str() +
                         " and " + wv.shape_str());
    }
    if (xv.shape[1] != wv.shape[0]) {
        throw ShapeError("linear: input width " + std::to_string(xv.shape[1]) +
                         " does not match weight rows " + std::to_string(wv.shape[0]));
    }
    const int64_t B = xv.shape[0], In = xv.shape[1], Out = wv.shape[1];
    if (b >= 0) require_shape(value(b), {Out}, "linear bias");

    Tensor y = Tensor::zeros({B, Out});
    for (int64_t i = 0; i < B; ++i) {
        for (int64_t k = 0; k < In; ++k) {
            const float xik = xv.at(i, k);
            if (xik == 0.0f) continue;
            for (int64_t o = 0; o < Out; ++o) {
                y.at(i, o) += xik * wv.at(k, o);
            }
        }
    }
    if (b >= 0) {
        const Tensor& bv = value(b);
        for (int64_t i = 0; i < B; ++i)
            for (int64_t o = 0; o < Out; ++o) y.at(i, o) += bv.at(o);
    }

    std::vector<int> parents = b >= 0 ? std::vector<int>{x, W, b} : std::vector<int>{x, W};
    return add_node(std::move(y), std::move(parents), [x, W, b](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const Tensor& xv = g.value(x);
        const Tensor& wv = g.value(W);
        const int64_t B = xv.shape[0], In = xv.shape[1], Out = wv.shape[1];
        if (g.nodes_[static_cast<size_t>(x)].needs_grad) {
            Tensor& gx = g.grad_mut(x);
            for (int64_t i = 0; i < B; ++i)
                for (int64_t k = 0; k < In; ++k) {
                    float acc = 0.0f;
                    for (int64_t o = 0; o < Out; ++o) acc += gy.at(i, o) * wv.at(k, o);
                    gx.at(i, k) += acc;
                }
        }
        if (g.nodes_[static_cast<size_t>(W)].needs_grad) {
            Tensor& gw = g.grad_mut(W);
            for (int64_t i = 0; i < B; ++i)
                for (int64_t k = 0; k < In; ++k) {
                    const float xik = xv.at(i, k);
                    if (xik == 0.0f) continue;
                    for (int64_t o = 0; o < Out; ++o) gw.at(k, o) += xik * gy.at(i, o);
                }
        }
        if (b >= 0 && g.nodes_[static_cast<size_t>(b)].needs_grad) {
            Tensor& gb = g.grad_mut(b);
            for (int64_t i = 0; i < B; ++i)
                for (int64_t o = 0; o < Out; ++o) gb.at(o) += gy.at(i, o);
        }
    });
}

int Graph::reshape(int x, const std::vector<int64_t>& shape) {
    const Tensor& xv = value(x);
    if (shape_numel(shape) != xv.numel()) {
        throw ShapeError("reshape: " + xv.shape_str() + " to " + shape_to_string(shape));
    }
    Tensor y(shape, xv.data);
    return add_node(std::move(y), {x}, [x](Graph& g, int self) {
        if (!g.nodes_[static_cast<size_t>(x)].needs_grad) return;
        const Tensor& gy = g.grad(self);
        Tensor& gx = g.grad_mut(x);
        for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gy.data[i];
    });
}

int Graph::relu(int x) {
    const Tensor& xv = value(x);
    Tensor y = xv;
    for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
    if (record_pattern) {
        for (float v : xv.data) pattern_.push_back(v > 0.0f ? 1 : 0);
    }
    return add_node(std::move(y), {x}, [x](Graph& g, int self) {
        if (!g.nodes_[static_cast<size_t>(x)].needs_grad) return;
        const Tensor& gy = g.grad(self);
        const Tensor& xv = g.value(x);
        Tensor& gx = g.grad_mut(x);
        // subgradient at 0 is 0
        for (size_t i = 0; i < xv.data.size(); ++i) {
            if (xv.data[i] > 0.0f) gx.data[i] += gy.data[i];
        }
    });
}

int Graph::conv2d(int x, int kernel, int bias, int pad) {
    const Tensor& xv = value(x);
    const Tensor& kv = value(kernel);
    if (xv.rank() != 4 || kv.rank() != 4) {
        throw ShapeError("conv2d: expected rank-4 input and kernel, got " + xv.shape_str() +
                         " and " + kv.shape_str());
    }
    if (xv.shape[1] != kv.shape[1]) {
        throw ShapeError("conv2d: input channels " + std::to_string(xv.shape[1]) +
                         " do not match kernel channels " + std::to_string(kv.shape[1]));
    }
    const int64_t B = xv.shape[0], Ci = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    const int64_t Co = kv.shape[0], Kh = kv.shape[2], Kw = kv.shape[3];
    const int64_t Ho = H + 2 * pad - Kh + 1;
    const int64_t Wo = W + 2 * pad - Kw + 1;
    if (Ho < 1 || Wo < 1) {
        throw ShapeError("conv2d: kernel " + kv.shape_str() + " too large for input " +
                         xv.shape_str() + " with pad " + std::to_string(pad));
    }
    if (bias >= 0) require_shape(value(bias), {Co}, "conv2d bias");

    Tensor y = Tensor::zeros({B, Co, Ho, Wo});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t oh = 0; oh < Ho; ++oh)
                for (int64_t ow = 0; ow < Wo; ++ow) {
                    float acc = bias >= 0 ? value(bias).at(co) : 0.0f;
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t dh = 0; dh < Kh; ++dh) {
                            const int64_t ih = oh + dh - pad;
                            if (ih < 0 || ih >= H) continue;
                            for (int64_t dw = 0; dw < Kw; ++dw) {
                                const int64_t iw = ow + dw - pad;
                                if (iw < 0 || iw >= W) continue;
                                acc += xv.at4(b, ci, ih, iw) * kv.at4(co, ci, dh, dw);
                            }
                        }
                    y.at4(b, co, oh, ow) = acc;
                }

    std::vector<int> parents =
        bias >= 0 ? std::vector<int>{x, kernel, bias} : std::vector<int>{x, kernel};
    return add_node(std::move(y), std::move(parents), [x, kernel, bias, pad](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const Tensor& xv = g.value(x);
        const Tensor& kv = g.value(kernel);
        const int64_t B = xv.shape[0], Ci = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
        const int64_t Co = kv.shape[0], Kh = kv.shape[2], Kw = kv.shape[3];
        const int64_t Ho = gy.shape[2], Wo = gy.shape[3];
        const bool need_x = g.nodes_[static_cast<size_t>(x)].needs_grad;
        const bool need_k = g.nodes_[static_cast<size_t>(kernel)].needs_grad;
        const bool need_b = bias >= 0 && g.nodes_[static_cast<size_t>(bias)].needs_grad;
        for (int64_t b = 0; b < B; ++b)
            for (int64_t co = 0; co < Co; ++co)
                for (int64_t oh = 0; oh < Ho; ++oh)
                    for (int64_t ow = 0; ow < Wo; ++ow) {
                        const float go = gy.at4(b, co, oh, ow);
                        if (go == 0.0f) continue;
                        if (need_b) g.grad_mut(bias).at(co) += go;
                        for (int64_t ci = 0; ci < Ci; ++ci)
                            for (int64_t dh = 0; dh < Kh; ++dh) {
                                const int64_t ih = oh + dh - pad;
                                if (ih < 0 || ih >= H) continue;
                                for (int64_t dw = 0; dw < Kw; ++dw) {
                                    const int64_t iw = ow + dw - pad;
                                    if (iw < 0 || iw >= W) continue;
                                    if (need_x)
                                        g.grad_mut(x).at4(b, ci, ih, iw) +=
                                            go * kv.at4(co, ci, dh, dw);
                                    if (need_k)
                                        g.grad_mut(kernel).at4(co, ci, dh, dw) +=
                                            go * xv.at4(b, ci, ih, iw);
                                }
                            }
                    }
    });
}

int Graph::maxpool2(int x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 4) {
        throw ShapeError("maxpool2: expected rank-4 input, got " + xv.shape_str());
    }
    const int64_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    if (H % 2 != 0 || W % 2 != 0) {
        throw ShapeError("maxpool2: spatial extents must be even, got " + xv.shape_str());
    }
    const int64_t Ho = H / 2, Wo = W / 2;
    Tensor y = Tensor::zeros({B, C, Ho, Wo});
    // argmax per window, shared with backward via capture
    auto argmax = std::make_shared<std::vector<uint8_t>>();
    argmax->reserve(static_cast<size_t>(y.numel()));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t oh = 0; oh < Ho; ++oh)
                for (int64_t ow = 0; ow < Wo; ++ow) {
                    float best = -std::numeric_limits<float>::infinity();
                    uint8_t which = 0;
                    for (uint8_t k = 0; k < 4; ++k) {
                        const int64_t ih = oh * 2 + k / 2;
                        const int64_t iw = ow * 2 + k % 2;
                        const float v = xv.at4(b, c, ih, iw);
                        if (v > best) {
                            best = v;
                            which = k;
                        }
                    }
                    y.at4(b, c, oh, ow) = best;
                    argmax->push_back(which);
                }
    if (record_pattern) {
        pattern_.insert(pattern_.end(), argmax->begin(), argmax->end());
    }
    return add_node(std::move(y), {x}, [x, argmax](Graph& g, int self) {
        if (!g.nodes_[static_cast<size_t>(x)].needs_grad) return;
        const Tensor& gy = g.grad(self);
        Tensor& gx = g.grad_mut(x);
        const int64_t B = gy.shape[0], C = gy.shape[1], Ho = gy.shape[2], Wo = gy.shape[3];
        size_t slot = 0;
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t oh = 0; oh < Ho; ++oh)
                    for (int64_t ow = 0; ow < Wo; ++ow) {
                        const uint8_t k = (*argmax)[slot++];
                        gx.at4(b, c, oh * 2 + k / 2, ow * 2 + k % 2) += gy.at4(b, c, oh, ow);
                    }
    });
}

int Graph::global_avg_pool(int x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 4) {
        throw ShapeError("global_avg_pool: expected rank-4 input, got " + xv.shape_str());
    }
    const int64_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    const float inv_area = 1.0f / static_cast<float>(H * W);
    Tensor y = Tensor::zeros({B, C});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) acc += xv.at4(b, c, h, w);
            y.at(b, c) = static_cast<float>(acc) * inv_area;
        }
    return add_node(std::move(y), {x}, [x](Graph& g, int self) {
        if (!g.nodes_[static_cast<size_t>(x)].needs_grad) return;
        const Tensor& gy = g.grad(self);
        Tensor& gx = g.grad_mut(x);
        const int64_t B = gx.shape[0], C = gx.shape[1], H = gx.shape[2], W = gx.shape[3];
        const float inv_area = 1.0f / static_cast<float>(H * W);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const float go = gy.at(b, c) * inv_area;
                for (int64_t h = 0; h < H; ++h)
                    for (int64_t w = 0; w < W; ++w) gx.at4(b, c, h, w) += go;
            }
    });
}

int Graph::fuse_channels(int base, int donor, const std::vector<uint8_t>& replaced) {
    const Tensor& av = value(base);
    const Tensor& bv = value(donor);
    if (av.rank() != 4 || !av.same_shape(bv)) {
        throw ShapeError("fuse_channels: branch shapes differ or are not rank-4: " +
                         av.shape_str() + " vs " + bv.shape_str());
    }
    const int64_t B = av.shape[0], C = av.shape[1];
    if (static_cast<int64_t>(replaced.size()) != C) {
        throw ShapeError("fuse_channels: mask covers " + std::to_string(replaced.size()) +
                         " channels, feature maps have " + std::to_string(C));
    }
    const int64_t plane = av.shape[2] * av.shape[3];
    Tensor y = av;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            if (!replaced[static_cast<size_t>(c)]) continue;
            const int64_t off = (b * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) y.at(off + i) = bv.at(off + i);
        }
    auto mask = std::make_shared<std::vector<uint8_t>>(replaced);
    return add_node(std::move(y), {base, donor}, [base, donor, mask](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const int64_t B = gy.shape[0], C = gy.shape[1];
        const int64_t plane = gy.shape[2] * gy.shape[3];
        const bool need_a = g.nodes_[static_cast<size_t>(base)].needs_grad;
        const bool need_b = g.nodes_[static_cast<size_t>(donor)].needs_grad;
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const bool from_donor = (*mask)[static_cast<size_t>(c)] != 0;
                if (from_donor && !need_b) continue;
                if (!from_donor && !need_a) continue;
                Tensor& gt = g.grad_mut(from_donor ? donor : base);
                const int64_t off = (b * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) gt.at(off + i) += gy.at(off + i);
            }
    });
}

Graph::Loss Graph::softmax_xent(int z, const std::vector<int>& labels) {
    const Tensor& zv = value(z);
    if (zv.rank() != 2) {
        throw ShapeError("softmax_xent: expected rank-2 logits, got " + zv.shape_str());
    }
    const int64_t B = zv.shape[0], C = zv.shape[1];
    if (static_cast<int64_t>(labels.size()) != B) {
        throw ShapeError("softmax_xent: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(B));
    }
    for (int64_t b = 0; b < B; ++b) {
        if (labels[static_cast<size_t>(b)] < 0 || labels[static_cast<size_t>(b)] >= C) {
            throw ValidationError("softmax_xent: label " +
                                  std::to_string(labels[static_cast<size_t>(b)]) +
                                  " out of range [0, " + std::to_string(C) + ")");
        }
    }

    double total = 0.0;
    for (int64_t b = 0; b < B; ++b) {
        float m = zv.at(b, 0);
        for (int64_t c = 1; c < C; ++c) m = std::max(m, zv.at(b, c));
        double sum = 0.0;
        for (int64_t c = 0; c < C; ++c) sum += std::exp(static_cast<double>(zv.at(b, c) - m));
        const double lse = static_cast<double>(m) + std::log(sum);
        total += lse - static_cast<double>(zv.at(b, labels[static_cast<size_t>(b)]));
    }
    total /= static_cast<double>(B);

    auto y = std::make_shared<std::vector<int>>(labels);
    Tensor lt({1}, {static_cast<float>(total)});
    int id = add_node(std::move(lt), {z}, [z, y](Graph& g, int self) {
        if (!g.nodes_[static_cast<size_t>(z)].needs_grad) return;
        const float seed = g.grad(self).at(0);
        const Tensor& zv = g.value(z);
        Tensor& gz = g.grad_mut(z);
        const int64_t B = zv.shape[0], C = zv.shape[1];
        const double inv_b = 1.0 / static_cast<double>(B);
        for (int64_t b = 0; b < B; ++b) {
            float m = zv.at(b, 0);
            for (int64_t c = 1; c < C; ++c) m = std::max(m, zv.at(b, c));
            double sum = 0.0;
            for (int64_t c = 0; c < C; ++c) sum += std::exp(static_cast<double>(zv.at(b, c) - m));
            for (int64_t c = 0; c < C; ++c) {
                double p = std::exp(static_cast<double>(zv.at(b, c) - m)) / sum;
                if (c == (*y)[static_cast<size_t>(b)]) p -= 1.0;
                gz.at(b, c) += seed * static_cast<float>(p * inv_b);
            }
        }
    });
    return Loss{id, total};
}

void Graph::backward(int loss_id) {
    // Allocate grad buffers for every node that needs one, seed the loss.
    for (Node& n : nodes_) {
        if (n.needs_grad) n.grad = Tensor::zeros(n.value.shape);
    }
    Node& loss = nodes_[static_cast<size_t>(loss_id)];
    if (!loss.needs_grad) return; // nothing trainable on the tape
    for (float& v : loss.grad.data) v = 1.0f;
    for (int i = loss_id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.needs_grad && n.backprop) n.backprop(*this, i);
    }
}

} // namespace h2t
