#include "relict/volume_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "relict/errors.hpp"
#include "relict/feature_metrics.hpp"
#include "relict/parallel.hpp"

namespace relict {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary readers assume a little-endian host");

using Bytes = std::vector<unsigned char>;

constexpr std::size_t kNiftiHeaderSize = 348;
constexpr std::size_t kNiftiDataOffset = 352;

// Reads a whole file; gzip streams are inflated, plain files pass through.
Bytes read_all(const fs::path& path) {
  if (!fs::exists(path)) throw IoError(fmt::format("{}: no such file", path.string()));
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw IoError(fmt::format("{}: cannot open", path.string()));
  Bytes out;
  std::array<unsigned char, 1 << 16> buffer{};
  for (;;) {
    const int n = gzread(file, buffer.data(), static_cast<unsigned>(buffer.size()));
    if (n < 0) {
      int err = 0;
      const std::string msg = gzerror(file, &err);
      gzclose(file);
      throw FormatError(fmt::format("{}: read failed: {}", path.string(), msg));
    }
    if (n == 0) break;
    out.insert(out.end(), buffer.begin(), buffer.begin() + n);
  }
  gzclose(file);
  return out;
}

bool has_gz_suffix(const fs::path& path) { return path.extension() == ".gz"; }

void write_all(const fs::path& path, const Bytes& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (has_gz_suffix(path)) {
    gzFile file = gzopen(path.c_str(), "wb6");
    if (file == nullptr) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
    const int n = gzwrite(file, bytes.data(), static_cast<unsigned>(bytes.size()));
    const int rc = gzclose(file);
    if (n != static_cast<int>(bytes.size()) || rc != Z_OK) {
      throw IoError(fmt::format("{}: write failed", path.string()));
    }
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

template <typename T>
T read_le(const Bytes& bytes, std::size_t offset, bool swap = false) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  if (swap) {
    auto* p = reinterpret_cast<unsigned char*>(&value);
    std::reverse(p, p + sizeof(T));
  }
  return value;
}

template <typename T>
void put_le(Bytes& bytes, std::size_t offset, T value) {
  std::memcpy(bytes.data() + offset, &value, sizeof(T));
}

template <typename T>
void append_le(Bytes& bytes, T value) {
  const auto* p = reinterpret_cast<const unsigned char*>(&value);
  bytes.insert(bytes.end(), p, p + sizeof(T));
}

std::string stem_without_nifti(const fs::path& path) {
  std::string name = path.filename().string();
  for (std::string_view ext : {".nii.gz", ".nii", ".rvec", ".rmap"}) {
    if (name.size() > ext.size() && name.ends_with(ext)) return name.substr(0, name.size() - ext.size());
  }
  return path.stem().string();
}

struct NiftiImage {
  Dims dims;
  Spacing spacing{};
  std::vector<double> values;
};

enum NiftiType : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUint16 = 512,
  kUint32 = 768,
  kInt64 = 1024,
  kUint64 = 1280,
};

std::size_t nifti_type_size(std::int16_t datatype) {
  switch (datatype) {
    case kUint8:
    case kInt8: return 1;
    case kInt16:
    case kUint16: return 2;
    case kInt32:
    case kUint32:
    case kFloat32: return 4;
    case kFloat64:
    case kInt64:
    case kUint64: return 8;
    default: return 0;
  }
}

double decode_voxel(const Bytes& bytes, std::size_t offset, std::int16_t datatype, bool swap) {
  switch (datatype) {
    case kUint8: return bytes[offset];
    case kInt8: return static_cast<std::int8_t>(bytes[offset]);
    case kInt16: return read_le<std::int16_t>(bytes, offset, swap);
    case kUint16: return read_le<std::uint16_t>(bytes, offset, swap);
    case kInt32: return read_le<std::int32_t>(bytes, offset, swap);
    case kUint32: return read_le<std::uint32_t>(bytes, offset, swap);
    case kFloat32: return read_le<float>(bytes, offset, swap);
    case kFloat64: return read_le<double>(bytes, offset, swap);
    case kInt64: return static_cast<double>(read_le<std::int64_t>(bytes, offset, swap));
    case kUint64: return static_cast<double>(read_le<std::uint64_t>(bytes, offset, swap));
    default: return 0.0;
  }
}

NiftiImage read_nifti(const fs::path& path) {
  const Bytes bytes = read_all(path);
  const std::string name = path.string();
  if (bytes.size() < kNiftiHeaderSize) {
    throw FormatError(fmt::format("{}: file shorter than a NIfTI-1 header", name));
  }
  bool swap = false;
  const auto sizeof_hdr = read_le<std::int32_t>(bytes, 0);
  if (sizeof_hdr != static_cast<std::int32_t>(kNiftiHeaderSize)) {
    if (read_le<std::int32_t>(bytes, 0, true) != static_cast<std::int32_t>(kNiftiHeaderSize)) {
      throw FormatError(fmt::format("{}: sizeof_hdr is not 348", name));
    }
    swap = true;
  }
  if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
    throw FormatError(fmt::format("{}: missing single-file NIfTI-1 magic 'n+1'", name));
  }

  std::array<std::int16_t, 8> dim{};
  for (std::size_t i = 0; i < 8; ++i) dim[i] = read_le<std::int16_t>(bytes, 40 + 2 * i, swap);
  if (dim[0] != 3) {
    throw DimensionError(fmt::format("{}: expected a 3D image, header has dim[0]={}", name, dim[0]));
  }
  for (std::size_t i = 1; i <= 3; ++i) {
    if (dim[i] <= 0) throw DimensionError(fmt::format("{}: non-positive dim[{}]={}", name, i, dim[i]));
  }

  const auto datatype = read_le<std::int16_t>(bytes, 70, swap);
  const std::size_t type_size = nifti_type_size(datatype);
  if (type_size == 0) throw FormatError(fmt::format("{}: unsupported datatype {}", name, datatype));

  NiftiImage image;
  image.dims = {static_cast<std::size_t>(dim[1]), static_cast<std::size_t>(dim[2]),
                static_cast<std::size_t>(dim[3])};
  for (std::size_t i = 0; i < 3; ++i) {
    const double s = read_le<float>(bytes, 76 + 4 * (i + 1), swap);
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw FormatError(fmt::format("{}: pixdim[{}]={} is not a positive spacing", name, i + 1, s));
    }
    image.spacing[i] = s;
  }

  const double vox_offset = read_le<float>(bytes, 108, swap);
  if (!(vox_offset >= static_cast<double>(kNiftiHeaderSize)) || vox_offset != std::floor(vox_offset)) {
    throw FormatError(fmt::format("{}: invalid vox_offset {}", name, vox_offset));
  }
  const auto offset = static_cast<std::size_t>(vox_offset);
  const std::size_t expected = image.dims.count();
  if (bytes.size() < offset || (bytes.size() - offset) != expected * type_size) {
    const std::size_t available = bytes.size() < offset ? 0 : (bytes.size() - offset);
    throw DimensionError(fmt::format("{}: header declares {} voxels of {} bytes, file holds {} bytes",
                                     name, expected, type_size, available));
  }

  double slope = read_le<float>(bytes, 112, swap);
  double inter = read_le<float>(bytes, 116, swap);
  if (slope == 0.0 || !std::isfinite(slope) || !std::isfinite(inter)) {
    slope = 1.0;
    inter = 0.0;
  }
  image.values.resize(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    const double raw = decode_voxel(bytes, offset + i * type_size, datatype, swap);
    image.values[i] = (slope == 1.0 && inter == 0.0) ? raw : raw * slope + inter;
  }
  return image;
}

Bytes nifti_header(const Dims& dims, const Spacing& spacing, std::int16_t datatype) {
  Bytes bytes(kNiftiDataOffset, 0);
  put_le<std::int32_t>(bytes, 0, static_cast<std::int32_t>(kNiftiHeaderSize));
  const std::array<std::size_t, 3> extent{dims.nx, dims.ny, dims.nz};
  for (std::size_t n : extent) {
    if (n > 32767) throw DimensionError(fmt::format("extent {} exceeds NIfTI-1 limits", n));
  }
  const std::array<std::int16_t, 8> dim{3,
                                        static_cast<std::int16_t>(dims.nx),
                                        static_cast<std::int16_t>(dims.ny),
                                        static_cast<std::int16_t>(dims.nz),
                                        1, 1, 1, 1};
  for (std::size_t i = 0; i < 8; ++i) put_le(bytes, 40 + 2 * i, dim[i]);
  put_le<std::int16_t>(bytes, 70, datatype);
  put_le<std::int16_t>(bytes, 72, static_cast<std::int16_t>(8 * nifti_type_size(datatype)));
  put_le<float>(bytes, 76, 1.0F);
  for (std::size_t i = 0; i < 3; ++i) put_le<float>(bytes, 76 + 4 * (i + 1), static_cast<float>(spacing[i]));
  put_le<float>(bytes, 108, static_cast<float>(kNiftiDataOffset));
  put_le<float>(bytes, 112, 1.0F);
  put_le<float>(bytes, 116, 0.0F);
  bytes[123] = 10;  // xyzt_units: mm, seconds
  std::memcpy(bytes.data() + 344, "n+1\0", 4);
  return bytes;
}

Bytes read_binary_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("{}: cannot open", path.string()));
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<double> read_float32_block(const Bytes& bytes, std::size_t offset, std::size_t count,
                                       const fs::path& path) {
  if (bytes.size() < offset || (bytes.size() - offset) != count * sizeof(float)) {
    throw DimensionError(fmt::format("{}: header declares {} float32 values, payload has {} bytes",
                                     path.string(), count,
                                     bytes.size() < offset ? 0 : bytes.size() - offset));
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = read_le<float>(bytes, offset + 4 * i);
  return values;
}

void append_float32_block(Bytes& bytes, std::span<const double> values) {
  bytes.reserve(bytes.size() + 4 * values.size());
  for (double v : values) append_le(bytes, static_cast<float>(v));
}

}  // namespace

Volume3D load_volume(const fs::path& path, std::optional<std::string> id) {
  NiftiImage image = read_nifti(path);
  return Volume3D(id.value_or(stem_without_nifti(path)), image.dims, image.spacing,
                  std::move(image.values));
}

SegmentationMask load_mask(const fs::path& path, std::optional<std::string> id) {
  NiftiImage image = read_nifti(path);
  std::vector<std::int32_t> labels(image.values.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double v = image.values[i];
    if (!std::isfinite(v) || v != std::floor(v) || v < 0.0 || v > 2147483647.0) {
      throw DataError(fmt::format("{}: voxel {} holds {}, not a non-negative integer label",
                                  path.string(), i, v));
    }
    labels[i] = static_cast<std::int32_t>(v);
  }
  return SegmentationMask(id.value_or(stem_without_nifti(path)), image.dims, image.spacing,
                          std::move(labels));
}

void write_volume(const Volume3D& volume, const fs::path& path) {
  Bytes bytes = nifti_header(volume.dims(), volume.spacing(), kFloat64);
  bytes.reserve(bytes.size() + 8 * volume.size());
  for (double v : volume.voxels()) append_le(bytes, v);
  write_all(path, bytes);
}

void write_mask(const SegmentationMask& mask, const fs::path& path) {
  Bytes bytes = nifti_header(mask.dims(), mask.spacing(), kInt32);
  bytes.reserve(bytes.size() + 4 * mask.labels().size());
  for (std::int32_t v : mask.labels()) append_le(bytes, v);
  write_all(path, bytes);
}

EmbeddingVector load_embedding(const fs::path& path, std::optional<std::string> id) {
  const Bytes bytes = read_binary_file(path);
  if (bytes.size() < 5 || std::memcmp(bytes.data(), "RVEC1", 5) != 0) {
    throw FormatError(fmt::format("{}: missing RVEC1 magic", path.string()));
  }
  if (bytes.size() < 9) throw DimensionError(fmt::format("{}: truncated RVEC header", path.string()));
  const auto dim = read_le<std::uint32_t>(bytes, 5);
  return EmbeddingVector(id.value_or(stem_without_nifti(path)),
                         read_float32_block(bytes, 9, dim, path));
}

void write_embedding(const EmbeddingVector& embedding, const fs::path& path) {
  Bytes bytes{'R', 'V', 'E', 'C', '1'};
  append_le(bytes, static_cast<std::uint32_t>(embedding.dim()));
  append_float32_block(bytes, embedding.values());
  write_all(path, bytes);
}

FeatureMap4D load_feature_map(const fs::path& path, std::optional<std::string> id) {
  const Bytes bytes = read_binary_file(path);
  if (bytes.size() < 5 || std::memcmp(bytes.data(), "RMAP1", 5) != 0) {
    throw FormatError(fmt::format("{}: missing RMAP1 magic", path.string()));
  }
  if (bytes.size() < 21) throw DimensionError(fmt::format("{}: truncated RMAP header", path.string()));
  FeatureMap4D::Shape shape{read_le<std::uint32_t>(bytes, 5), read_le<std::uint32_t>(bytes, 9),
                            read_le<std::uint32_t>(bytes, 13), read_le<std::uint32_t>(bytes, 17)};
  return FeatureMap4D(id.value_or(stem_without_nifti(path)), shape,
                      read_float32_block(bytes, 21, shape.count(), path));
}

void write_feature_map(const FeatureMap4D& map, const fs::path& path) {
  Bytes bytes{'R', 'M', 'A', 'P', '1'};
  const auto& s = map.shape();
  for (std::size_t v : {s.channels, s.depth, s.height, s.width}) {
    append_le(bytes, static_cast<std::uint32_t>(v));
  }
  append_float32_block(bytes, map.values());
  write_all(path, bytes);
}

Volume3D zscore_normalize(const Volume3D& v, std::vector<std::string>* warnings) {
  const auto voxels = v.voxels();
  if (voxels.size() < 2) {
    throw DimensionError(fmt::format("{}: z-score needs at least 2 voxels", v.id()));
  }
  const double n = static_cast<double>(voxels.size());
  const double mean = std::accumulate(voxels.begin(), voxels.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : voxels) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / n);

  std::vector<double> out(voxels.size(), 0.0);
  if (sd == 0.0) {
    if (warnings != nullptr) {
      warnings->push_back(fmt::format("{}: constant volume, z-score set to zeros", v.id()));
    }
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (voxels[i] - mean) / sd;
  }
  return Volume3D(v.id(), v.dims(), v.spacing(), std::move(out));
}

std::string_view to_string(CorpusRole role) {
  return role == CorpusRole::training ? "training" : "synthetic";
}

const ImageBundle* Corpus::find(std::string_view id) const {
  const auto it = std::find_if(images.begin(), images.end(),
                               [&](const ImageBundle& b) { return b.id == id; });
  return it == images.end() ? nullptr : &*it;
}

CorpusManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("{}: cannot open manifest", path.string()));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }

  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto resolve = [&](const nlohmann::json& value) -> std::optional<fs::path> {
    if (value.is_null()) return std::nullopt;
    if (!value.is_string()) throw FormatError(fmt::format("{}: paths must be strings", path.string()));
    fs::path p = value.get<std::string>();
    return p.is_absolute() ? p : base / p;
  };

  CorpusManifest manifest;
  try {
    const std::string role = doc.at("role").get<std::string>();
    if (role == "training") {
      manifest.role = CorpusRole::training;
    } else if (role == "synthetic") {
      manifest.role = CorpusRole::synthetic;
    } else {
      throw FormatError(fmt::format("{}: unknown role '{}'", path.string(), role));
    }
    std::set<std::string> seen;
    for (const auto& item : doc.at("entries")) {
      CorpusEntry entry;
      entry.id = item.at("id").get<std::string>();
      if (entry.id.empty()) throw FormatError(fmt::format("{}: empty image id", path.string()));
      if (!seen.insert(entry.id).second) {
        throw CorpusError(fmt::format("{}: duplicate image id '{}'", path.string(), entry.id));
      }
      const auto volume = resolve(item.at("volume"));
      if (!volume) throw FormatError(fmt::format("{}: entry '{}' has no volume", path.string(), entry.id));
      entry.volume = *volume;
      entry.mask = resolve(item.value("mask", nlohmann::json()));
      entry.embedding = resolve(item.value("embedding", nlohmann::json()));
      entry.feature_map = resolve(item.value("feature_map", nlohmann::json()));
      for (const auto& p : {std::optional<fs::path>(entry.volume), entry.mask, entry.embedding,
                            entry.feature_map}) {
        if (p && !fs::exists(*p)) {
          throw CorpusError(fmt::format("{}: entry '{}' references missing file {}", path.string(),
                                        entry.id, p->string()));
        }
      }
      manifest.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: malformed manifest: {}", path.string(), e.what()));
  }
  return manifest;
}

void write_manifest(const CorpusManifest& manifest, const fs::path& path) {
  nlohmann::json doc;
  doc["role"] = std::string(to_string(manifest.role));
  doc["entries"] = nlohmann::json::array();
  auto opt = [](const std::optional<fs::path>& p) {
    return p ? nlohmann::json(p->string()) : nlohmann::json(nullptr);
  };
  for (const auto& e : manifest.entries) {
    doc["entries"].push_back({{"id", e.id},
                              {"volume", e.volume.string()},
                              {"mask", opt(e.mask)},
                              {"embedding", opt(e.embedding)},
                              {"feature_map", opt(e.feature_map)}});
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(fmt::format("{}: cannot write manifest", path.string()));
  out << doc.dump(2) << '\n';
}

Corpus load_corpus(const CorpusManifest& manifest, const CorpusLoadOptions& options) {
  Corpus corpus;
  corpus.role = manifest.role;
  corpus.images.resize(manifest.entries.size());

  parallel_for(manifest.entries.size(), options.workers, [&](std::size_t i) {
    const CorpusEntry& entry = manifest.entries[i];
    try {
      ImageBundle bundle;
      bundle.id = entry.id;
      bundle.volume = std::make_shared<const Volume3D>(load_volume(entry.volume, entry.id));
      if (entry.mask) {
        auto mask = std::make_shared<const SegmentationMask>(load_mask(*entry.mask, entry.id));
        if (!(mask->dims() == bundle.volume->dims())) {
          throw DimensionError(fmt::format("mask grid {} differs from volume grid {}",
                                           to_string(mask->dims()), to_string(bundle.volume->dims())));
        }
        bundle.mask = std::move(mask);
      }
      if (entry.embedding) {
        bundle.embedding = std::make_shared<const EmbeddingVector>(load_embedding(*entry.embedding, entry.id));
      } else if (entry.feature_map) {
        const FeatureMap4D map = load_feature_map(*entry.feature_map, entry.id);
        const auto& ps = options.pool_shape;
        bundle.embedding =
            std::make_shared<const EmbeddingVector>(flatten(adaptive_avg_pool(map, {ps[0], ps[1], ps[2]})));
      }
      corpus.images[i] = std::move(bundle);
    } catch (const Error& e) {
      rethrow_with_context(e, fmt::format("{} image '{}'", to_string(manifest.role), entry.id));
    }
  });

  std::optional<std::size_t> dim;
  for (const auto& image : corpus.images) {
    if (!image.embedding) continue;
    if (dim && *dim != image.embedding->dim()) {
      throw DimensionError(fmt::format("{} image '{}': embedding dim {} differs from corpus dim {}",
                                       to_string(manifest.role), image.id, image.embedding->dim(), *dim));
    }
    dim = image.embedding->dim();
  }
  return corpus;
}

}  // namespace relict
