#include "knncls/datastore.hpp"

#include "knncls/errors.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <queue>
#include <string>

static_assert(std::endian::native == std::endian::little,
              "datastore serialization assumes a little-endian host");

namespace knncls {

namespace {

constexpr char kMagic[6] = {'K', 'N', 'N', 'D', 'S', '1'};
constexpr std::size_t kHeaderSize = 6 + 2 + 4 + 8 + 4;

bool hit_less(const NeighborHit& a, const NeighborHit& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.index < b.index;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, const T& value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        T value;
        read(&value, sizeof(T));
        return value;
    }

    void read(void* dst, std::size_t n) {
        if (n > bytes_.size() - pos_) {
            throw FormatError(FormatErrorKind::Truncated, "datastore ended before expected payload");
        }
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in chunks.
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
        crc = crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

Datastore::Datastore(std::uint32_t dim, std::uint32_t num_labels, std::vector<float> keys,
                     std::vector<LabelId> labels)
    : dim_(dim), num_labels_(num_labels), keys_(std::move(keys)), labels_(std::move(labels)) {}

Datastore Datastore::build(std::span<const Entry> entries, std::uint32_t num_labels,
                           std::uint32_t dim) {
    if (num_labels == 0) {
        throw InvalidArgument("datastore: num_labels must be positive");
    }
    if (dim == 0 && !entries.empty()) {
        dim = static_cast<std::uint32_t>(entries.front().first.size());
    }
    if (!entries.empty() && dim == 0) {
        throw DimensionError("datastore: keys must have positive dimension");
    }
    std::vector<float> keys;
    std::vector<LabelId> labels;
    keys.reserve(entries.size() * dim);
    labels.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [key, label] = entries[i];
        if (key.size() != dim) {
            throw DimensionError("datastore: entry " + std::to_string(i) + " has dimension " +
                                 std::to_string(key.size()) + ", expected " + std::to_string(dim));
        }
        if (label >= num_labels) {
            throw InvalidArgument("datastore: entry " + std::to_string(i) + " label " +
                                  std::to_string(label) + " out of range");
        }
        require_finite(key, "datastore key");
        for (double v : key) keys.push_back(static_cast<float>(v));
        labels.push_back(label);
    }
    return Datastore(dim, num_labels, std::move(keys), std::move(labels));
}

std::vector<NeighborHit> Datastore::search(std::span<const double> query, std::size_t k) const {
    if (empty()) {
        throw RetrievalUnavailable("search on an empty datastore");
    }
    if (query.size() != dim_) {
        throw DimensionError("search: query dimension " + std::to_string(query.size()) +
                             " does not match datastore dimension " + std::to_string(dim_));
    }
    if (k == 0) {
        throw InvalidArgument("search: k must be positive");
    }
    const std::size_t n = labels_.size();
    const std::size_t keep = std::min(k, n);

    // Bounded max-heap on (distance, index): top() is the worst retained hit.
    std::priority_queue<NeighborHit, std::vector<NeighborHit>, decltype(&hit_less)> heap(hit_less);
    for (std::size_t i = 0; i < n; ++i) {
        NeighborHit hit{i, squared_l2(query, key(i)), labels_[i]};
        if (heap.size() < keep) {
            heap.push(hit);
        } else if (hit_less(hit, heap.top())) {
            heap.pop();
            heap.push(hit);
        }
    }
    std::vector<NeighborHit> hits;
    hits.reserve(keep);
    while (!heap.empty()) {
        hits.push_back(heap.top());
        heap.pop();
    }
    std::reverse(hits.begin(), hits.end());
    return hits;
}

std::vector<std::uint8_t> serialize_datastore(const Datastore& ds) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + ds.raw_keys().size() * 4 + ds.labels().size() * 4 + 4);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put(out, kDatastoreFormatVersion);
    put(out, ds.dim());
    put(out, ds.count());
    put(out, ds.num_labels());
    const auto* keys = reinterpret_cast<const std::uint8_t*>(ds.raw_keys().data());
    out.insert(out.end(), keys, keys + ds.raw_keys().size() * sizeof(float));
    const auto* labels = reinterpret_cast<const std::uint8_t*>(ds.labels().data());
    out.insert(out.end(), labels, labels + ds.labels().size() * sizeof(LabelId));
    put(out, crc_of(out));
    return out;
}

Datastore deserialize_datastore(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof(kMagic)) {
        if (bytes.empty() || std::memcmp(bytes.data(), kMagic, bytes.size()) == 0) {
            throw FormatError(FormatErrorKind::Truncated, "file shorter than the datastore magic");
        }
        throw FormatError(FormatErrorKind::BadMagic, "not a KNNDS1 datastore file");
    }
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw FormatError(FormatErrorKind::BadMagic, "not a KNNDS1 datastore file");
    }
    Reader reader(bytes.subspan(sizeof(kMagic)));
    const auto version = reader.get<std::uint16_t>();
    if (version != kDatastoreFormatVersion) {
        throw FormatError(FormatErrorKind::VersionMismatch,
                          "datastore format version " + std::to_string(version) +
                              ", expected " + std::to_string(kDatastoreFormatVersion));
    }
    const auto dim = reader.get<std::uint32_t>();
    const auto count = reader.get<std::uint64_t>();
    const auto num_labels = reader.get<std::uint32_t>();

    // Size check before allocating anything proportional to `count`.
    const std::uint64_t remaining = bytes.size() - kHeaderSize;
    const std::uint64_t row_bytes = std::uint64_t{dim} * sizeof(float) + sizeof(LabelId);
    if (remaining < sizeof(std::uint32_t) || count > (remaining - sizeof(std::uint32_t)) / row_bytes) {
        throw FormatError(FormatErrorKind::Truncated,
                          "datastore payload shorter than header declares");
    }
    if (count * row_bytes + sizeof(std::uint32_t) != remaining) {
        throw FormatError(FormatErrorKind::Malformed, "trailing bytes after datastore payload");
    }
    const std::size_t body = bytes.size() - sizeof(std::uint32_t);
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + body, sizeof(stored_crc));
    if (crc_of(bytes.first(body)) != stored_crc) {
        throw FormatError(FormatErrorKind::ChecksumMismatch, "datastore CRC32 does not match");
    }
    if (num_labels == 0 || (count > 0 && dim == 0)) {
        throw FormatError(FormatErrorKind::Malformed, "datastore header has zero dimension or labels");
    }

    std::vector<float> keys(static_cast<std::size_t>(count) * dim);
    std::vector<LabelId> labels(static_cast<std::size_t>(count));
    Reader payload(bytes.subspan(kHeaderSize));
    payload.read(keys.data(), keys.size() * sizeof(float));
    payload.read(labels.data(), labels.size() * sizeof(LabelId));
    for (LabelId label : labels) {
        if (label >= num_labels) {
            throw FormatError(FormatErrorKind::Malformed, "datastore label out of range");
        }
    }
    return {dim, num_labels, std::move(keys), std::move(labels)};
}

void save_datastore(const Datastore& ds, const std::filesystem::path& path) {
    const auto bytes = serialize_datastore(ds);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError(FormatErrorKind::Io, "write failed for " + path.string());
    }
}

Datastore load_datastore(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_datastore(bytes);
}

}  // namespace knncls
