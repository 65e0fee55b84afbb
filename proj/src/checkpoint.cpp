#include "nmtlab/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nmtlab/errors.hpp"

namespace nmtlab {

namespace {

static_assert(sizeof(double) == 8, "float64 payload requires 8-byte double");

void put_le64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t sw = 0;
        for (int i = 0; i < 8; ++i) sw = (sw << 8) | ((bits >> (8 * i)) & 0xffu);
        bits = sw;
    }
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double get_le64(const char* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace

const NamedTensorData* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

NamedTensorData* Checkpoint::find(const std::string& name) {
    for (auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

std::string Checkpoint::serialize() const {
    std::string config_text = config.to_kv();
    std::ostringstream head;
    head << "NMTCKPT v1\n";
    head << "config_bytes " << config_text.size() << "\n" << config_text;
    head << "tensor_count " << tensors.size() << "\n";
    long long offset = 0;
    for (const auto& t : tensors) {
        head << t.name << " " << t.shape.size();
        for (int d : t.shape) head << " " << d;
        head << " " << offset << "\n";
        offset += static_cast<long long>(t.values.size());
    }
    head << "payload_elems " << offset << "\n";
    std::string out = head.str();
    out.reserve(out.size() + static_cast<size_t>(offset) * 8);
    for (const auto& t : tensors)
        for (double v : t.values) put_le64(out, v);
    return out;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint to " + path);
    std::string bytes = serialize();
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("short write while saving checkpoint " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read checkpoint from " + path);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

    // manifest is everything up to the end of the payload_elems line
    Checkpoint ckpt;
    size_t pos = 0;
    auto read_line = [&]() {
        auto nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw DataError("checkpoint manifest truncated");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };
    if (read_line() != "NMTCKPT v1") throw DataError("not a checkpoint file: bad magic");
    {
        std::istringstream ls(read_line());
        std::string key;
        size_t n;
        if (!(ls >> key >> n) || key != "config_bytes") throw DataError("checkpoint: bad config_bytes line");
        if (pos + n > bytes.size()) throw DataError("checkpoint: config text truncated");
        ckpt.config = ModelConfig::from_kv(bytes.substr(pos, n));
        pos += n;
    }
    size_t count;
    {
        std::istringstream ls(read_line());
        std::string key;
        if (!(ls >> key >> count) || key != "tensor_count") throw DataError("checkpoint: bad tensor_count line");
    }
    std::vector<long long> offsets;
    for (size_t i = 0; i < count; ++i) {
        std::istringstream ls(read_line());
        NamedTensorData t;
        size_t ndim;
        long long offset;
        if (!(ls >> t.name >> ndim)) throw DataError("checkpoint: bad tensor manifest line");
        t.shape.resize(ndim);
        for (auto& d : t.shape)
            if (!(ls >> d)) throw DataError("checkpoint: bad tensor shape for " + t.name);
        if (!(ls >> offset)) throw DataError("checkpoint: missing offset for " + t.name);
        offsets.push_back(offset);
        ckpt.tensors.push_back(std::move(t));
    }
    long long payload_elems;
    {
        std::istringstream ls(read_line());
        std::string key;
        if (!(ls >> key >> payload_elems) || key != "payload_elems")
            throw DataError("checkpoint: bad payload_elems line");
    }
    if (bytes.size() - pos != static_cast<size_t>(payload_elems) * 8)
        throw DataError("checkpoint: payload size mismatch");
    for (size_t i = 0; i < count; ++i) {
        auto& t = ckpt.tensors[i];
        long long n = shape_numel(t.shape);
        if (offsets[i] < 0 || offsets[i] + n > payload_elems)
            throw DataError("checkpoint: tensor " + t.name + " payload out of range");
        t.values.resize(static_cast<size_t>(n));
        const char* base = bytes.data() + pos + static_cast<size_t>(offsets[i]) * 8;
        for (long long j = 0; j < n; ++j) t.values[static_cast<size_t>(j)] = get_le64(base + j * 8);
    }
    return ckpt;
}

Checkpoint snapshot_model(const Model& model) {
    Checkpoint ckpt;
    ckpt.config = model.config();
    for (const auto& p : model.parameters())
        ckpt.tensors.push_back({p.name, p.tensor.shape(), p.tensor.values()});
    std::sort(ckpt.tensors.begin(), ckpt.tensors.end(),
              [](const auto& a, const auto& b) { return a.name < b.name; });
    return ckpt;
}

void restore_model(Model& model, const Checkpoint& ckpt) {
    for (auto& p : model.parameters()) {
        const NamedTensorData* t = ckpt.find(p.name);
        if (!t) throw DataError("checkpoint missing tensor '" + p.name + "'");
        if (t->shape != p.tensor.shape())
            throw DataError("checkpoint tensor '" + p.name + "' has shape " + shape_str(t->shape) +
                            ", model expects " + shape_str(p.tensor.shape()));
        p.tensor.values() = t->values;
    }
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt) {
    Rng rng(0); // weights are overwritten immediately
    auto model = build_model(ckpt.config, rng);
    restore_model(*model, ckpt);
    return model;
}

} // namespace nmtlab
