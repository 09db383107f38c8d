#pragma once

#include "knncls/core.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace knncls {

struct NeighborHit {
    std::size_t index = 0;
    double distance = 0.0;  // squared L2
    LabelId label = 0;

    friend bool operator==(const NeighborHit&, const NeighborHit&) = default;
};

/// Immutable (key, label) store with exact squared-L2 top-k search.
///
/// Keys are held as f32 and widened to f64 when distances are computed.
/// Entries keep their insertion order; `index` in a NeighborHit refers to it.
class Datastore {
public:
    using Entry = std::pair<Vector, LabelId>;

    /// Throws DimensionError on mixed key dimensions and InvalidArgument on a
    /// label >= num_labels. An empty entry list yields dim() == 0 unless `dim`
    /// is given explicitly.
    static Datastore build(std::span<const Entry> entries, std::uint32_t num_labels,
                           std::uint32_t dim = 0);

    /// Exact top-k by (distance, index). Returns min(k, count()) hits.
    /// Throws RetrievalUnavailable when the store is empty.
    std::vector<NeighborHit> search(std::span<const double> query, std::size_t k) const;

    std::uint32_t dim() const noexcept { return dim_; }
    std::uint64_t count() const noexcept { return labels_.size(); }
    std::uint32_t num_labels() const noexcept { return num_labels_; }
    bool empty() const noexcept { return labels_.empty(); }

    std::span<const float> key(std::size_t i) const {
        return {keys_.data() + i * dim_, dim_};
    }
    LabelId label(std::size_t i) const { return labels_[i]; }

    const std::vector<float>& raw_keys() const noexcept { return keys_; }
    const std::vector<LabelId>& labels() const noexcept { return labels_; }

    friend bool operator==(const Datastore&, const Datastore&) = default;

private:
    Datastore(std::uint32_t dim, std::uint32_t num_labels, std::vector<float> keys,
              std::vector<LabelId> labels);

    friend Datastore deserialize_datastore(std::span<const std::uint8_t> bytes);

    std::uint32_t dim_ = 0;
    std::uint32_t num_labels_ = 0;
    std::vector<float> keys_;  // row-major, count * dim
    std::vector<LabelId> labels_;
};

/// Binary layout (little-endian):
///   "KNNDS1" | u16 version | u32 dim | u64 count | u32 num_labels |
///   f32 keys[count * dim] | u32 labels[count] | u32 crc32(all preceding bytes)
inline constexpr std::uint16_t kDatastoreFormatVersion = 1;

std::vector<std::uint8_t> serialize_datastore(const Datastore& ds);
Datastore deserialize_datastore(std::span<const std::uint8_t> bytes);

void save_datastore(const Datastore& ds, const std::filesystem::path& path);
/// Throws FormatError with kind BadMagic, VersionMismatch, Truncated,
/// ChecksumMismatch, Malformed or Io.
Datastore load_datastore(const std::filesystem::path& path);

}  // namespace knncls
