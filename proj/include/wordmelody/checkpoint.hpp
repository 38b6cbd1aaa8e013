#ifndef WORDMELODY_CHECKPOINT_HPP
#define WORDMELODY_CHECKPOINT_HPP

// Binary checkpoint, little-endian throughout:
//   "WMCK" | u32 version | u64 vocab fingerprint | u32 epoch
//   u64 vocab_size | u64 embed_dim | u64 hidden_dim | u64 condition_dim | u8 feed
//   u32 tensor count, then per tensor:
//     u32 name length | name | u32 rank | u64 dims[rank] | f64 values[prod(dims)]

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "wordmelody/error.hpp"
#include "wordmelody/neural.hpp"
#include "wordmelody/smf.hpp"

namespace wordmelody {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint64_t vocab_fingerprint = 0;
    std::uint32_t epoch = 0;
    neural::ModelParams params;
};

namespace detail {

class ByteWriter {
public:
    template <typename T>
    void put(T v) {
        std::uint64_t bits;
        if constexpr (std::is_same_v<T, double>) {
            bits = std::bit_cast<std::uint64_t>(v);
        } else {
            bits = static_cast<std::uint64_t>(v);
        }
        for (std::size_t i = 0; i < sizeof(T); ++i) bytes.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
    }
    void put_raw(const std::string& s) { bytes.insert(bytes.end(), s.begin(), s.end()); }
    std::vector<std::uint8_t> bytes;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

    template <typename T>
    T get() {
        if (bytes_.size() - pos_ < sizeof(T)) throw CheckpointError("truncated checkpoint");
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        if constexpr (std::is_same_v<T, double>) {
            return std::bit_cast<double>(bits);
        } else {
            return static_cast<T>(bits);
        }
    }
    std::string get_raw(std::size_t n) {
        if (bytes_.size() - pos_ < n) throw CheckpointError("truncated checkpoint");
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
    detail::ByteWriter w;
    w.put_raw("WMCK");
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint64_t>(ck.vocab_fingerprint);
    w.put<std::uint32_t>(ck.epoch);
    const auto& c = ck.params.config;
    w.put<std::uint64_t>(c.vocab_size);
    w.put<std::uint64_t>(c.embed_dim);
    w.put<std::uint64_t>(c.hidden_dim);
    w.put<std::uint64_t>(c.condition_dim);
    w.put<std::uint8_t>(c.feed == neural::ConditionFeed::EveryStep ? 0 : 1);
    w.put<std::uint32_t>(6);
    ck.params.for_each([&](const char* name, const neural::Tensor& t) {
        const std::string n = name;
        w.put<std::uint32_t>(static_cast<std::uint32_t>(n.size()));
        w.put_raw(n);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) w.put<std::uint64_t>(d);
        for (double v : t.values) w.put<double>(v);
    });
    return std::move(w.bytes);
}

// Throws CheckpointError if the file is malformed or was trained against a
// different vocabulary than `expected_fingerprint`.
inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, std::uint64_t expected_fingerprint) {
    detail::ByteReader r(bytes);
    if (r.get_raw(4) != "WMCK") throw CheckpointError("not a checkpoint file");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.vocab_fingerprint = r.get<std::uint64_t>();
    if (ck.vocab_fingerprint != expected_fingerprint)
        throw CheckpointError("checkpoint was trained with a different vocabulary (hash mismatch)");
    ck.epoch = r.get<std::uint32_t>();
    neural::ModelConfig c;
    c.vocab_size = r.get<std::uint64_t>();
    c.embed_dim = r.get<std::uint64_t>();
    c.hidden_dim = r.get<std::uint64_t>();
    c.condition_dim = r.get<std::uint64_t>();
    c.feed = r.get<std::uint8_t>() == 0 ? neural::ConditionFeed::EveryStep : neural::ConditionFeed::FirstStepOnly;
    ck.params = neural::ModelParams(c);
    if (r.get<std::uint32_t>() != 6) throw CheckpointError("unexpected tensor count");
    ck.params.for_each([&](const char* name, neural::Tensor& t) {
        const auto len = r.get<std::uint32_t>();
        if (r.get_raw(len) != name) throw CheckpointError(std::string("expected tensor ") + name);
        const auto rank = r.get<std::uint32_t>();
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = r.get<std::uint64_t>();
        if (shape != t.shape) throw CheckpointError(std::string("shape mismatch for tensor ") + name);
        for (double& v : t.values) v = r.get<double>();
    });
    if (!r.at_end()) throw CheckpointError("trailing bytes in checkpoint");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    smf::write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_fingerprint) {
    return deserialize_checkpoint(smf::read_file(path), expected_fingerprint);
}

}  // namespace wordmelody

#endif  // WORDMELODY_CHECKPOINT_HPP
