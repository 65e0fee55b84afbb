#pragma once

// Single-file checkpoint: an ASCII manifest (config text plus name -> shape
// and element offset per tensor) followed by a little-endian float64
// payload. The exact layout is documented in docs/formats.md so checkpoints
// stay portable across implementations.

#include <string>
#include <vector>

#include "nmtlab/model.hpp"
#include "nmtlab/tensor.hpp"

namespace nmtlab {

struct NamedTensorData {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

struct Checkpoint {
    ModelConfig config;
    std::vector<NamedTensorData> tensors; // sorted by name

    const NamedTensorData* find(const std::string& name) const;
    NamedTensorData* find(const std::string& name);

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
    std::string serialize() const; // byte-exact file content
};

Checkpoint snapshot_model(const Model& model);
// Copies checkpoint tensors into the model; shapes must match exactly.
void restore_model(Model& model, const Checkpoint& ckpt);
// Builds a fresh model from the checkpoint's config and restores weights.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt);

} // namespace nmtlab
