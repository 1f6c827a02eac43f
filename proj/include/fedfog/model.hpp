#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fedfog/data.hpp"

namespace fedfog {

/// Module families of the modular model. Tags disambiguate instances:
/// adapter layer index, task-head task id, expert/encoder index.
enum class KindFamily { Encoder, Backbone, Adapter, TaskHead, Prompt, Expert };

struct ModuleKind {
    KindFamily family = KindFamily::Backbone;
    int tag = 0;

    bool operator==(const ModuleKind&) const = default;
    bool operator<(const ModuleKind& o) const {
        return family != o.family ? family < o.family : tag < o.tag;
    }
};

std::string kind_name(const ModuleKind& kind);
const char* family_name(KindFamily family);

/// One named parameter block. `wire_bytes` is what the block costs on the
/// network and is decoupled from values.size(); blocks with empty values are
/// size-only placeholders used for circulation cost accounting.
struct ParamBlock {
    ModuleKind kind;
    std::vector<double> values;
    bool trainable = false;
    std::uint64_t wire_bytes = 0;
};

/// Size-only extra module requested through configuration.
struct PlaceholderSpec {
    ModuleKind kind;
    std::uint64_t wire_bytes = 0;
    bool trainable = true;
};

struct ModelSpec {
    int input_dim = 32;          // d
    int backbone_layers = 2;     // L
    int backbone_width = 64;     // w
    int adapter_bottleneck = 8;  // h, desk-scale stand-in
    int full_scale_bottleneck = 256; // bottleneck of the full-scale configuration
    int num_classes = 10;        // C
    int num_tasks = 1;
    std::uint64_t trainable_wire_bytes = 6'000'000;
    std::uint64_t frozen_wire_bytes = 328'000'000;
    std::uint64_t head_wire_bytes = 1'000'000; // share of trainable bytes across heads
    std::vector<PlaceholderSpec> placeholders;
};

struct ModularModel {
    ModelSpec spec;
    std::vector<ParamBlock> blocks;

    const ParamBlock& block(const ModuleKind& kind) const;
    ParamBlock& block(const ModuleKind& kind);
    bool has_block(const ModuleKind& kind) const;
};

/// Per-block gradients aligned with model.blocks; frozen blocks get empty
/// entries.
struct Gradients {
    std::vector<std::vector<double>> by_block;
};

using BlockValues = std::pair<ModuleKind, std::vector<double>>;
using BlockSelector = std::function<bool(const ParamBlock&)>;

BlockSelector select_trainable();
BlockSelector select_all();
BlockSelector select_frozen();
BlockSelector select_family(KindFamily family);

/// Frozen random backbone (L affine layers + GELU), per layer one Adapter
/// block holding two parallel zero-output bottleneck adapters, one zero
/// task head per task, plus any configured placeholders. Deterministic in
/// (spec, seed); a fresh model computes exactly the backbone+head pipeline.
ModularModel init_model(const ModelSpec& spec, std::uint64_t seed);

/// Class probabilities for a batch (row-major, batch x num_classes), using
/// the head of `task`. Rows are softmax-normalized.
std::vector<double> forward(const ModularModel& model, const Dataset& batch, int task = 0);

/// Mean cross-entropy and exact analytic gradients for every trainable block.
std::pair<double, Gradients> loss_and_grads(const ModularModel& model, const Dataset& batch,
                                            int task = 0);

/// values -= lr * grad on trainable blocks.
void sgd_step(ModularModel& model, const Gradients& grads, double lr);

std::uint64_t payload_bytes(const ModularModel& model, const BlockSelector& select);

std::vector<BlockValues> extract_blocks(const ModularModel& model, const BlockSelector& select);
void load_blocks(ModularModel& model, const std::vector<BlockValues>& blocks);

/// Fraction of rows whose argmax probability matches the label.
double accuracy(const ModularModel& model, const Dataset& dataset, int task = 0);

} // namespace fedfog
