#include "fedfog/model.hpp"

#include <algorithm>
#include <cmath>

#include "fedfog/errors.hpp"
#include "fedfog/rng.hpp"

namespace fedfog {

namespace {

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
           x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

// y (rows x out_dim) = x W^T + b, W row-major (out_dim x in_dim).
void affine_forward(const double* x, int rows, int in_dim, const double* w, const double* b,
                    int out_dim, double* y) {
    for (int r = 0; r < rows; ++r) {
        const double* xi = x + static_cast<std::size_t>(r) * in_dim;
        double* yi = y + static_cast<std::size_t>(r) * out_dim;
        for (int o = 0; o < out_dim; ++o) {
            double acc = b[o];
            const double* wo = w + static_cast<std::size_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) acc += wo[i] * xi[i];
            yi[o] = acc;
        }
    }
}

// Accumulates dw/db and, when dx != nullptr, adds W^T dy into dx.
void affine_backward(const double* x, const double* dy, int rows, int in_dim, int out_dim,
                     const double* w, double* dw, double* db, double* dx) {
    for (int r = 0; r < rows; ++r) {
        const double* xi = x + static_cast<std::size_t>(r) * in_dim;
        const double* dyi = dy + static_cast<std::size_t>(r) * out_dim;
        double* dxi = dx ? dx + static_cast<std::size_t>(r) * in_dim : nullptr;
        for (int o = 0; o < out_dim; ++o) {
            const double g = dyi[o];
            if (dw) {
                double* dwo = dw + static_cast<std::size_t>(o) * in_dim;
                for (int i = 0; i < in_dim; ++i) dwo[i] += g * xi[i];
            }
            if (db) db[o] += g;
            if (dxi) {
                const double* wo = w + static_cast<std::size_t>(o) * in_dim;
                for (int i = 0; i < in_dim; ++i) dxi[i] += wo[i] * g;
            }
        }
    }
}

struct AdapterOffsets {
    // Offsets of one adapter's pieces inside the Adapter block; the second
    // parallel adapter starts at `stride`.
    int down_w, down_b, up_w, up_b, stride;
};

AdapterOffsets adapter_offsets(const ModelSpec& spec) {
    const int w = spec.backbone_width;
    const int h = spec.adapter_bottleneck;
    AdapterOffsets off{};
    off.down_w = 0;
    off.down_b = h * w;
    off.up_w = off.down_b + h;
    off.up_b = off.up_w + w * h;
    off.stride = off.up_b + w;
    return off;
}

int backbone_layer_offset(const ModelSpec& spec, int layer) {
    const int w = spec.backbone_width;
    const int first = w * spec.input_dim + w;
    return layer == 0 ? 0 : first + (layer - 1) * (w * w + w);
}

int backbone_layer_in_dim(const ModelSpec& spec, int layer) {
    return layer == 0 ? spec.input_dim : spec.backbone_width;
}

struct ForwardCache {
    int rows = 0;
    std::vector<double> input;                     // copy of batch features
    std::vector<std::vector<double>> pre;          // z_l, rows x w
    std::vector<std::vector<double>> act;          // gelu(z_l)
    std::vector<std::vector<double>> ad_pre[2];    // u_i per layer, rows x h
    std::vector<std::vector<double>> ad_act[2];    // gelu(u_i)
    std::vector<std::vector<double>> out;          // x_l after adapters
    std::vector<double> logits;                    // rows x C
    std::vector<double> probs;
};

void check_batch(const ModularModel& model, const Dataset& batch, int task) {
    if (batch.dim != model.spec.input_dim) {
        throw ShapeError("forward: batch dim " + std::to_string(batch.dim) +
                         " does not match input_dim " + std::to_string(model.spec.input_dim));
    }
    if (task < 0 || task >= model.spec.num_tasks) {
        throw ShapeError("forward: task " + std::to_string(task) + " out of range");
    }
}

ForwardCache run_forward(const ModularModel& model, const Dataset& batch, int task) {
    const ModelSpec& spec = model.spec;
    const int rows = batch.size();
    const int w = spec.backbone_width;
    const int h = spec.adapter_bottleneck;
    const int C = spec.num_classes;
    const auto off = adapter_offsets(spec);
    const auto& backbone = model.block({KindFamily::Backbone, 0}).values;

    ForwardCache cache;
    cache.rows = rows;
    cache.input = batch.features;
    cache.pre.resize(static_cast<std::size_t>(spec.backbone_layers));
    cache.act.resize(static_cast<std::size_t>(spec.backbone_layers));
    cache.out.resize(static_cast<std::size_t>(spec.backbone_layers));
    for (int side = 0; side < 2; ++side) {
        cache.ad_pre[side].resize(static_cast<std::size_t>(spec.backbone_layers));
        cache.ad_act[side].resize(static_cast<std::size_t>(spec.backbone_layers));
    }

    const double* x = cache.input.data();
    for (int l = 0; l < spec.backbone_layers; ++l) {
        auto li = static_cast<std::size_t>(l);
        const int in_dim = backbone_layer_in_dim(spec, l);
        const double* bw = backbone.data() + backbone_layer_offset(spec, l);
        const double* bb = bw + static_cast<std::size_t>(w) * in_dim;

        cache.pre[li].assign(static_cast<std::size_t>(rows) * w, 0.0);
        affine_forward(x, rows, in_dim, bw, bb, w, cache.pre[li].data());
        cache.act[li].resize(cache.pre[li].size());
        for (std::size_t i = 0; i < cache.pre[li].size(); ++i) {
            cache.act[li][i] = gelu(cache.pre[li][i]);
        }

        const auto& adapter = model.block({KindFamily::Adapter, l}).values;
        cache.out[li] = cache.act[li]; // residual base
        for (int side = 0; side < 2; ++side) {
            const double* down_w = adapter.data() + side * off.stride + off.down_w;
            const double* down_b = adapter.data() + side * off.stride + off.down_b;
            const double* up_w = adapter.data() + side * off.stride + off.up_w;
            const double* up_b = adapter.data() + side * off.stride + off.up_b;

            auto& u = cache.ad_pre[side][li];
            auto& s = cache.ad_act[side][li];
            u.assign(static_cast<std::size_t>(rows) * h, 0.0);
            affine_forward(cache.act[li].data(), rows, w, down_w, down_b, h, u.data());
            s.resize(u.size());
            for (std::size_t i = 0; i < u.size(); ++i) s[i] = gelu(u[i]);

            std::vector<double> up_out(static_cast<std::size_t>(rows) * w, 0.0);
            affine_forward(s.data(), rows, h, up_w, up_b, w, up_out.data());
            for (std::size_t i = 0; i < up_out.size(); ++i) cache.out[li][i] += up_out[i];
        }
        x = cache.out[li].data();
    }

    const auto& head = model.block({KindFamily::TaskHead, task}).values;
    const double* hw = head.data();
    const double* hb = hw + static_cast<std::size_t>(C) * w;
    cache.logits.assign(static_cast<std::size_t>(rows) * C, 0.0);
    affine_forward(x, rows, w, hw, hb, C, cache.logits.data());

    cache.probs.resize(cache.logits.size());
    for (int r = 0; r < rows; ++r) {
        const double* lr = cache.logits.data() + static_cast<std::size_t>(r) * C;
        double* pr = cache.probs.data() + static_cast<std::size_t>(r) * C;
        double mx = lr[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, lr[c]);
        double denom = 0.0;
        for (int c = 0; c < C; ++c) {
            pr[c] = std::exp(lr[c] - mx);
            denom += pr[c];
        }
        for (int c = 0; c < C; ++c) pr[c] /= denom;
    }
    return cache;
}

} // namespace

std::string kind_name(const ModuleKind& kind) {
    switch (kind.family) {
    case KindFamily::Backbone: return "backbone";
    case KindFamily::Adapter: return "adapter." + std::to_string(kind.tag);
    case KindFamily::TaskHead: return "task_head." + std::to_string(kind.tag);
    case KindFamily::Encoder: return "encoder." + std::to_string(kind.tag);
    case KindFamily::Prompt: return "prompt." + std::to_string(kind.tag);
    case KindFamily::Expert: return "expert." + std::to_string(kind.tag);
    }
    return "?";
}

const char* family_name(KindFamily family) {
    switch (family) {
    case KindFamily::Backbone: return "backbone";
    case KindFamily::Adapter: return "adapter";
    case KindFamily::TaskHead: return "task_head";
    case KindFamily::Encoder: return "encoder";
    case KindFamily::Prompt: return "prompt";
    case KindFamily::Expert: return "expert";
    }
    return "?";
}

const ParamBlock& ModularModel::block(const ModuleKind& kind) const {
    for (const auto& b : blocks) {
        if (b.kind == kind) return b;
    }
    throw ShapeError("model has no block " + kind_name(kind));
}

ParamBlock& ModularModel::block(const ModuleKind& kind) {
    for (auto& b : blocks) {
        if (b.kind == kind) return b;
    }
    throw ShapeError("model has no block " + kind_name(kind));
}

bool ModularModel::has_block(const ModuleKind& kind) const {
    for (const auto& b : blocks) {
        if (b.kind == kind) return true;
    }
    return false;
}

BlockSelector select_trainable() {
    return [](const ParamBlock& b) { return b.trainable; };
}

BlockSelector select_all() {
    return [](const ParamBlock&) { return true; };
}

BlockSelector select_frozen() {
    return [](const ParamBlock& b) { return !b.trainable; };
}

BlockSelector select_family(KindFamily family) {
    return [family](const ParamBlock& b) { return b.kind.family == family; };
}

ModularModel init_model(const ModelSpec& spec, std::uint64_t seed) {
    if (spec.input_dim < 1 || spec.backbone_layers < 1 || spec.backbone_width < 1 ||
        spec.adapter_bottleneck < 1 || spec.num_classes < 1 || spec.num_tasks < 1) {
        throw ConfigError("model spec: all dimensions must be >= 1");
    }
    if (spec.head_wire_bytes > spec.trainable_wire_bytes) {
        throw ConfigError("model spec: head_wire_bytes exceeds trainable_wire_bytes");
    }

    const int L = spec.backbone_layers;
    const int w = spec.backbone_width;
    const int h = spec.adapter_bottleneck;
    const int C = spec.num_classes;

    ModularModel model;
    model.spec = spec;
    Rng rng(seed);

    // Frozen backbone, one block: per layer W then b, biases zero.
    ParamBlock backbone;
    backbone.kind = {KindFamily::Backbone, 0};
    backbone.trainable = false;
    backbone.wire_bytes = spec.frozen_wire_bytes;
    for (int l = 0; l < L; ++l) {
        const int in_dim = backbone_layer_in_dim(spec, l);
        const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
        for (int i = 0; i < w * in_dim; ++i) backbone.values.push_back(scale * rng.normal());
        for (int i = 0; i < w; ++i) backbone.values.push_back(0.0);
    }
    model.blocks.push_back(std::move(backbone));

    // Trainable wire budget: heads take head_wire_bytes, adapters the rest;
    // integer remainders go to the lowest-indexed blocks so totals stay exact.
    const std::uint64_t adapter_budget = spec.trainable_wire_bytes - spec.head_wire_bytes;
    auto share = [](std::uint64_t total, int parts, int idx) {
        auto n = static_cast<std::uint64_t>(parts);
        return total / n + (static_cast<std::uint64_t>(idx) < total % n ? 1 : 0);
    };

    const double down_scale = 1.0 / std::sqrt(static_cast<double>(w));
    for (int l = 0; l < L; ++l) {
        ParamBlock adapter;
        adapter.kind = {KindFamily::Adapter, l};
        adapter.trainable = true;
        adapter.wire_bytes = share(adapter_budget, L, l);
        for (int side = 0; side < 2; ++side) {
            for (int i = 0; i < h * w; ++i) adapter.values.push_back(down_scale * rng.normal());
            for (int i = 0; i < h; ++i) adapter.values.push_back(0.0);
            // Up-projection zeroed: a fresh adapter contributes nothing.
            for (int i = 0; i < w * h + w; ++i) adapter.values.push_back(0.0);
        }
        model.blocks.push_back(std::move(adapter));
    }

    for (int t = 0; t < spec.num_tasks; ++t) {
        ParamBlock head;
        head.kind = {KindFamily::TaskHead, t};
        head.trainable = true;
        head.wire_bytes = share(spec.head_wire_bytes, spec.num_tasks, t);
        head.values.assign(static_cast<std::size_t>(C) * w + C, 0.0);
        model.blocks.push_back(std::move(head));
    }

    for (const auto& ph : spec.placeholders) {
        if (ph.kind.family == KindFamily::Backbone || ph.kind.family == KindFamily::Adapter ||
            ph.kind.family == KindFamily::TaskHead) {
            throw ConfigError("model spec: placeholder kind " + kind_name(ph.kind) +
                              " collides with a built-in family");
        }
        if (model.has_block(ph.kind)) {
            throw ConfigError("model spec: duplicate placeholder " + kind_name(ph.kind));
        }
        ParamBlock block;
        block.kind = ph.kind;
        block.trainable = ph.trainable;
        block.wire_bytes = ph.wire_bytes;
        model.blocks.push_back(std::move(block));
    }
    return model;
}

std::vector<double> forward(const ModularModel& model, const Dataset& batch, int task) {
    check_batch(model, batch, task);
    return run_forward(model, batch, task).probs;
}

std::pair<double, Gradients> loss_and_grads(const ModularModel& model, const Dataset& batch,
                                            int task) {
    check_batch(model, batch, task);
    const ModelSpec& spec = model.spec;
    const int rows = batch.size();
    if (rows == 0) throw DataError("loss_and_grads: empty batch");
    for (int y : batch.labels) {
        if (y < 0 || y >= spec.num_classes) {
            throw DataError("loss_and_grads: label " + std::to_string(y) + " out of range");
        }
    }

    const int w = spec.backbone_width;
    const int h = spec.adapter_bottleneck;
    const int C = spec.num_classes;
    const auto off = adapter_offsets(spec);

    ForwardCache cache = run_forward(model, batch, task);

    double loss = 0.0;
    for (int r = 0; r < rows; ++r) {
        const double* lr = cache.logits.data() + static_cast<std::size_t>(r) * C;
        double mx = lr[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, lr[c]);
        double lse = 0.0;
        for (int c = 0; c < C; ++c) lse += std::exp(lr[c] - mx);
        lse = mx + std::log(lse);
        loss += lse - lr[batch.labels[static_cast<std::size_t>(r)]];
    }
    loss /= rows;

    Gradients grads;
    grads.by_block.resize(model.blocks.size());
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        if (model.blocks[i].trainable) {
            grads.by_block[i].assign(model.blocks[i].values.size(), 0.0);
        }
    }
    auto block_index = [&](const ModuleKind& kind) {
        for (std::size_t i = 0; i < model.blocks.size(); ++i) {
            if (model.blocks[i].kind == kind) return i;
        }
        throw ShapeError("model has no block " + kind_name(kind));
    };

    // d loss / d logits = (softmax - onehot) / rows
    std::vector<double> dlogits(cache.probs);
    for (int r = 0; r < rows; ++r) {
        dlogits[static_cast<std::size_t>(r) * C + batch.labels[static_cast<std::size_t>(r)]] -= 1.0;
    }
    for (auto& g : dlogits) g /= rows;

    const auto head_idx = block_index({KindFamily::TaskHead, task});
    const auto& head = model.blocks[head_idx].values;
    auto& dhead = grads.by_block[head_idx];
    const double* last = cache.out.back().data();
    std::vector<double> dx(static_cast<std::size_t>(rows) * w, 0.0);
    affine_backward(last, dlogits.data(), rows, w, C, head.data(), dhead.data(),
                    dhead.data() + static_cast<std::size_t>(C) * w, dx.data());

    const auto& backbone = model.block({KindFamily::Backbone, 0}).values;
    for (int l = spec.backbone_layers - 1; l >= 0; --l) {
        auto li = static_cast<std::size_t>(l);
        const auto adapter_idx = block_index({KindFamily::Adapter, l});
        const auto& adapter = model.blocks[adapter_idx].values;
        auto& dadapter = grads.by_block[adapter_idx];

        // dx is d loss / d x_l; the residual feeds it straight into g_l.
        std::vector<double> dact(dx);
        for (int side = 0; side < 2; ++side) {
            const double* down_w = adapter.data() + side * off.stride + off.down_w;
            const double* up_w = adapter.data() + side * off.stride + off.up_w;
            double* d_down_w = dadapter.data() + side * off.stride + off.down_w;
            double* d_down_b = dadapter.data() + side * off.stride + off.down_b;
            double* d_up_w = dadapter.data() + side * off.stride + off.up_w;
            double* d_up_b = dadapter.data() + side * off.stride + off.up_b;

            const auto& u = cache.ad_pre[side][li];
            const auto& s = cache.ad_act[side][li];
            std::vector<double> ds(static_cast<std::size_t>(rows) * h, 0.0);
            affine_backward(s.data(), dx.data(), rows, h, w, up_w, d_up_w, d_up_b, ds.data());
            for (std::size_t i = 0; i < ds.size(); ++i) ds[i] *= gelu_grad(u[i]);
            affine_backward(cache.act[li].data(), ds.data(), rows, w, h, down_w, d_down_w,
                            d_down_b, dact.data());
        }

        // Through the backbone nonlinearity and affine layer; weights are
        // frozen so only dx propagates.
        std::vector<double>& dz = dact;
        const auto& pre = cache.pre[li];
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= gelu_grad(pre[i]);

        const int in_dim = backbone_layer_in_dim(spec, l);
        const double* bw = backbone.data() + backbone_layer_offset(spec, l);
        const double* below = l == 0 ? cache.input.data() : cache.out[li - 1].data();
        std::vector<double> dx_below(static_cast<std::size_t>(rows) * in_dim, 0.0);
        affine_backward(below, dz.data(), rows, in_dim, w, bw, nullptr, nullptr,
                        l == 0 ? nullptr : dx_below.data());
        dx = std::move(dx_below);
    }
    return {loss, grads};
}

void sgd_step(ModularModel& model, const Gradients& grads, double lr) {
    if (grads.by_block.size() != model.blocks.size()) {
        throw ShapeError("sgd_step: gradient block count mismatch");
    }
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        auto& block = model.blocks[i];
        if (!block.trainable) continue;
        const auto& g = grads.by_block[i];
        if (g.size() != block.values.size()) {
            throw ShapeError("sgd_step: gradient size mismatch on " + kind_name(block.kind));
        }
        for (std::size_t j = 0; j < g.size(); ++j) block.values[j] -= lr * g[j];
    }
}

std::uint64_t payload_bytes(const ModularModel& model, const BlockSelector& select) {
    std::uint64_t total = 0;
    for (const auto& block : model.blocks) {
        if (select(block)) total += block.wire_bytes;
    }
    return total;
}

std::vector<BlockValues> extract_blocks(const ModularModel& model, const BlockSelector& select) {
    std::vector<BlockValues> out;
    for (const auto& block : model.blocks) {
        if (select(block)) out.emplace_back(block.kind, block.values);
    }
    return out;
}

void load_blocks(ModularModel& model, const std::vector<BlockValues>& blocks) {
    for (const auto& [kind, values] : blocks) {
        auto& target = model.block(kind);
        if (target.values.size() != values.size()) {
            throw ShapeError("load_blocks: size mismatch on " + kind_name(kind));
        }
        target.values = values;
    }
}

double accuracy(const ModularModel& model, const Dataset& dataset, int task) {
    if (dataset.size() == 0) return 0.0;
    auto probs = forward(model, dataset, task);
    const int C = model.spec.num_classes;
    int correct = 0;
    for (int r = 0; r < dataset.size(); ++r) {
        const double* pr = probs.data() + static_cast<std::size_t>(r) * C;
        int best = 0;
        for (int c = 1; c < C; ++c) {
            if (pr[c] > pr[best]) best = c;
        }
        if (best == dataset.labels[static_cast<std::size_t>(r)]) ++correct;
    }
    return static_cast<double>(correct) / dataset.size();
}

} // namespace fedfog
