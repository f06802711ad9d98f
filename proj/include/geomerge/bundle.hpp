#pragma once
// Adapter bundle container: a directory holding manifest.json plus one raw
// little-endian row-major tensor file per factor, each guarded by CRC32C.
// Reads are all-or-nothing; writes land in a temp directory that replaces
// the target atomically at the end, so no partial bundle is ever visible.

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "geomerge/core.hpp"
#include "geomerge/quotient.hpp"

namespace geomerge {

inline constexpr int kBundleFormatVersion = 1;

enum class BundleErrc {
  io_failure,
  parse_error,
  unknown_format_version,
  missing_file,
  shape_mismatch,
  checksum_mismatch,
  invalid_manifest,
};

struct bundle_error : geomerge_error {
  BundleErrc code;
  bundle_error(BundleErrc c, const std::string& what) : geomerge_error(what), code(c) {}
};

enum class TensorDtype { f32, f64 };
enum class LayerRepr { lowrank, polar };

struct LayerRecord {
  Index d_out = 0, d_in = 0, rank = 0;
  LayerRepr repr = LayerRepr::lowrank;
  double scale = 1.0;
  DenseMatrix G, H;      // lowrank factors, d_out x rank and d_in x rank
  DenseMatrix U, B, V;   // polar factors
  DenseMatrix fisher;    // optional diagonal Fisher in dense-delta coordinates, d_out x d_in
  std::map<std::string, TensorDtype> dtypes;  // storage dtype per tensor; absent -> f64

  bool has_fisher() const { return fisher.size() > 0; }
  TensorDtype dtype_of(const std::string& tensor) const {
    auto it = dtypes.find(tensor);
    return it == dtypes.end() ? TensorDtype::f64 : it->second;
  }
};

struct AdapterBundle {
  std::string name;
  std::string base_model;
  std::vector<std::pair<std::string, LayerRecord>> layers;  // ordered, unique names
  std::map<std::string, std::string> metadata;

  const LayerRecord* find_layer(const std::string& layer_name) const {
    for (const auto& [n, rec] : layers)
      if (n == layer_name) return &rec;
    return nullptr;
  }
};

namespace detail {

inline std::uint32_t crc32c(const unsigned char* data, std::size_t len) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0x82F63B78u ^ (c >> 1) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

inline std::string crc32c_hex(const unsigned char* data, std::size_t len) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc32c(data, len));
  return buf;
}

inline std::size_t dtype_size(TensorDtype d) { return d == TensorDtype::f32 ? 4 : 8; }

inline std::string dtype_name(TensorDtype d) { return d == TensorDtype::f32 ? "f32" : "f64"; }

inline TensorDtype dtype_of_name(const std::string& s, const char* who) {
  if (s == "f32") return TensorDtype::f32;
  if (s == "f64") return TensorDtype::f64;
  throw bundle_error(BundleErrc::parse_error, std::string(who) + ": unknown dtype '" + s + "'");
}

// Row-major little-endian encoding of a matrix.  The in-memory layout is
// already row-major; on a big-endian host the bytes of each scalar are
// reversed.
inline std::vector<unsigned char> encode_tensor(const DenseMatrix& M, TensorDtype dtype) {
  const std::size_t count = static_cast<std::size_t>(M.size());
  const std::size_t esize = dtype_size(dtype);
  std::vector<unsigned char> bytes(count * esize);
  if (dtype == TensorDtype::f64) {
    std::memcpy(bytes.data(), M.data(), bytes.size());
  } else {
    const double* src = M.data();
    for (std::size_t i = 0; i < count; ++i) {
      const float f = static_cast<float>(src[i]);
      std::memcpy(bytes.data() + i * 4, &f, 4);
    }
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i) {
      unsigned char* e = bytes.data() + i * esize;
      for (std::size_t a = 0, b = esize - 1; a < b; ++a, --b) std::swap(e[a], e[b]);
    }
  }
  return bytes;
}

inline DenseMatrix decode_tensor(const std::vector<unsigned char>& bytes, Index rows, Index cols,
                                 TensorDtype dtype) {
  const std::size_t count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  const std::size_t esize = dtype_size(dtype);
  std::vector<unsigned char> local = bytes;
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i) {
      unsigned char* e = local.data() + i * esize;
      for (std::size_t a = 0, b = esize - 1; a < b; ++a, --b) std::swap(e[a], e[b]);
    }
  }
  DenseMatrix M(rows, cols);
  if (dtype == TensorDtype::f64) {
    std::memcpy(M.data(), local.data(), count * 8);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, local.data() + i * 4, 4);
      M.data()[i] = static_cast<double>(f);
    }
  }
  return M;
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in)
    throw bundle_error(BundleErrc::missing_file, "bundle: cannot open " + file.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>()};
  if (in.bad())
    throw bundle_error(BundleErrc::io_failure, "bundle: read failed for " + file.string());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& file, const void* data,
                             std::size_t len) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out)
    throw bundle_error(BundleErrc::io_failure, "bundle: cannot create " + file.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  out.flush();
  if (!out)
    throw bundle_error(BundleErrc::io_failure, "bundle: write failed for " + file.string());
}

// The tensors a layer must carry, in manifest order.
inline std::vector<std::string> layer_tensor_names(const LayerRecord& rec) {
  std::vector<std::string> names = rec.repr == LayerRepr::lowrank
                                       ? std::vector<std::string>{"G", "H"}
                                       : std::vector<std::string>{"U", "B", "V"};
  if (rec.has_fisher()) names.push_back("fisher");
  return names;
}

inline const DenseMatrix& layer_tensor(const LayerRecord& rec, const std::string& tensor) {
  if (tensor == "G") return rec.G;
  if (tensor == "H") return rec.H;
  if (tensor == "U") return rec.U;
  if (tensor == "B") return rec.B;
  if (tensor == "V") return rec.V;
  if (tensor == "fisher") return rec.fisher;
  throw invalid_input("bundle: unknown tensor name '" + tensor + "'");
}

inline std::pair<Index, Index> expected_tensor_shape(const LayerRecord& rec,
                                                     const std::string& tensor) {
  if (tensor == "G") return {rec.d_out, rec.rank};
  if (tensor == "H") return {rec.d_in, rec.rank};
  if (tensor == "U") return {rec.d_out, rec.rank};
  if (tensor == "B") return {rec.rank, rec.rank};
  if (tensor == "V") return {rec.d_in, rec.rank};
  if (tensor == "fisher") return {rec.d_out, rec.d_in};
  throw invalid_input("bundle: unknown tensor name '" + tensor + "'");
}

}  // namespace detail

/// Structural validation of the in-memory bundle invariants.
inline void validate_bundle(const AdapterBundle& bundle) {
  std::map<std::string, int> seen;
  for (const auto& [name, rec] : bundle.layers) {
    if (name.empty()) throw invalid_input("bundle: empty layer name");
    if (++seen[name] > 1) throw invalid_input("bundle: duplicate layer name '" + name + "'");
    const std::string who = "bundle layer '" + name + "'";
    if (rec.d_out <= 0 || rec.d_in <= 0 || rec.rank <= 0)
      throw invalid_input(who + ": dimensions must be positive");
    if (rec.rank > std::min(rec.d_out, rec.d_in))
      throw invalid_input(who + ": rank exceeds min(d_out, d_in)");
    if (!std::isfinite(rec.scale)) throw invalid_input(who + ": non-finite scale");
    for (const std::string& tensor : detail::layer_tensor_names(rec)) {
      const DenseMatrix& M = detail::layer_tensor(rec, tensor);
      const auto [rows, cols] = detail::expected_tensor_shape(rec, tensor);
      if (M.rows() != rows || M.cols() != cols)
        throw invalid_input(who + ": tensor " + tensor + " is " + std::to_string(M.rows()) +
                            "x" + std::to_string(M.cols()) + ", expected " +
                            std::to_string(rows) + "x" + std::to_string(cols));
      require_finite(M, (who + ": tensor " + tensor).c_str());
    }
  }
}

/// Write the bundle under `path` (a directory).  Contents are staged in a
/// sibling temp directory and swapped in at the end; identical bundles
/// produce byte-identical directories.
inline void write_bundle(const AdapterBundle& bundle, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  validate_bundle(bundle);
  fs::path tmp = path;
  tmp += ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp, ec);
  if (ec)
    throw bundle_error(BundleErrc::io_failure, "bundle: cannot create " + tmp.string());

  try {
    nlohmann::ordered_json manifest;
    manifest["format_version"] = kBundleFormatVersion;
    manifest["name"] = bundle.name;
    manifest["base_model"] = bundle.base_model;
    manifest["layers"] = nlohmann::ordered_json::array();
    for (std::size_t li = 0; li < bundle.layers.size(); ++li) {
      const auto& [name, rec] = bundle.layers[li];
      nlohmann::ordered_json jl;
      jl["name"] = name;
      jl["d_out"] = rec.d_out;
      jl["d_in"] = rec.d_in;
      jl["rank"] = rec.rank;
      jl["representation"] = rec.repr == LayerRepr::lowrank ? "lowrank" : "polar";
      jl["scale"] = rec.scale;
      nlohmann::ordered_json jt;
      for (const std::string& tensor : detail::layer_tensor_names(rec)) {
        const DenseMatrix& M = detail::layer_tensor(rec, tensor);
        const TensorDtype dtype = rec.dtype_of(tensor);
        const std::vector<unsigned char> bytes = detail::encode_tensor(M, dtype);
        const std::string file = "t" + std::to_string(li) + "_" + tensor + ".bin";
        detail::write_file_bytes(tmp / file, bytes.data(), bytes.size());
        nlohmann::ordered_json jten;
        jten["file"] = file;
        jten["dtype"] = detail::dtype_name(dtype);
        jten["shape"] = {M.rows(), M.cols()};
        jten["crc32c"] = detail::crc32c_hex(bytes.data(), bytes.size());
        jt[tensor] = std::move(jten);
      }
      jl["tensors"] = std::move(jt);
      manifest["layers"].push_back(std::move(jl));
    }
    manifest["metadata"] = bundle.metadata;

    const std::string text = manifest.dump(2) + "\n";
    detail::write_file_bytes(tmp / "manifest.json", text.data(), text.size());
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }

  fs::remove_all(path, ec);
  fs::rename(tmp, path, ec);
  if (ec)
    throw bundle_error(BundleErrc::io_failure,
                       "bundle: cannot move " + tmp.string() + " to " + path.string());
}

/// Read and fully validate a bundle directory; nothing is returned unless
/// every tensor loaded, matched its declared shape, and passed its checksum.
inline AdapterBundle read_bundle(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = path / "manifest.json";
  if (!fs::exists(manifest_path))
    throw bundle_error(BundleErrc::missing_file, "bundle: no manifest at " + manifest_path.string());

  nlohmann::ordered_json manifest;
  try {
    std::ifstream in(manifest_path);
    if (!in)
      throw bundle_error(BundleErrc::io_failure, "bundle: cannot open " + manifest_path.string());
    manifest = nlohmann::ordered_json::parse(in);
  } catch (const bundle_error&) {
    throw;
  } catch (const std::exception& e) {
    throw bundle_error(BundleErrc::parse_error,
                       "bundle: manifest parse failure: " + std::string(e.what()));
  }

  AdapterBundle bundle;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kBundleFormatVersion)
      throw bundle_error(BundleErrc::unknown_format_version,
                         "bundle: format_version " + std::to_string(version) + " unsupported");
    bundle.name = manifest.at("name").get<std::string>();
    bundle.base_model = manifest.at("base_model").get<std::string>();
    if (manifest.contains("metadata"))
      bundle.metadata = manifest.at("metadata").get<std::map<std::string, std::string>>();

    for (const auto& jl : manifest.at("layers")) {
      const std::string name = jl.at("name").get<std::string>();
      LayerRecord rec;
      rec.d_out = jl.at("d_out").get<Index>();
      rec.d_in = jl.at("d_in").get<Index>();
      rec.rank = jl.at("rank").get<Index>();
      const std::string repr = jl.at("representation").get<std::string>();
      if (repr == "lowrank")
        rec.repr = LayerRepr::lowrank;
      else if (repr == "polar")
        rec.repr = LayerRepr::polar;
      else
        throw bundle_error(BundleErrc::parse_error,
                           "bundle: unknown representation '" + repr + "'");
      rec.scale = jl.contains("scale") ? jl.at("scale").get<double>() : 1.0;

      const auto& jt = jl.at("tensors");
      std::vector<std::string> expected = rec.repr == LayerRepr::lowrank
                                              ? std::vector<std::string>{"G", "H"}
                                              : std::vector<std::string>{"U", "B", "V"};
      if (jt.contains("fisher")) expected.push_back("fisher");
      for (const std::string& tensor : expected) {
        if (!jt.contains(tensor))
          throw bundle_error(BundleErrc::invalid_manifest,
                             "bundle layer '" + name + "': tensor " + tensor + " missing");
        const auto& jten = jt.at(tensor);
        const TensorDtype dtype =
            detail::dtype_of_name(jten.at("dtype").get<std::string>(), "bundle");
        const auto shape = jten.at("shape").get<std::vector<Index>>();
        if (shape.size() != 2)
          throw bundle_error(BundleErrc::invalid_manifest,
                             "bundle layer '" + name + "': tensor " + tensor +
                                 " must declare a 2-D shape");
        const auto [erows, ecols] = detail::expected_tensor_shape(rec, tensor);
        if (shape[0] != erows || shape[1] != ecols)
          throw bundle_error(BundleErrc::shape_mismatch,
                             "bundle layer '" + name + "': tensor " + tensor + " declares " +
                                 std::to_string(shape[0]) + "x" + std::to_string(shape[1]) +
                                 ", layer dims require " + std::to_string(erows) + "x" +
                                 std::to_string(ecols));
        const std::string file = jten.at("file").get<std::string>();
        const std::vector<unsigned char> bytes = detail::read_file_bytes(path / file);
        const std::size_t want = static_cast<std::size_t>(erows) *
                                 static_cast<std::size_t>(ecols) * detail::dtype_size(dtype);
        if (bytes.size() != want)
          throw bundle_error(BundleErrc::shape_mismatch,
                             "bundle layer '" + name + "': tensor file " + file + " holds " +
                                 std::to_string(bytes.size()) + " bytes, expected " +
                                 std::to_string(want));
        if (jten.contains("crc32c")) {
          const std::string got = detail::crc32c_hex(bytes.data(), bytes.size());
          if (got != jten.at("crc32c").get<std::string>())
            throw bundle_error(BundleErrc::checksum_mismatch,
                               "bundle layer '" + name + "': tensor file " + file +
                                   " fails its checksum");
        }
        DenseMatrix M = detail::decode_tensor(bytes, erows, ecols, dtype);
        if (tensor == "G") rec.G = std::move(M);
        else if (tensor == "H") rec.H = std::move(M);
        else if (tensor == "U") rec.U = std::move(M);
        else if (tensor == "B") rec.B = std::move(M);
        else if (tensor == "V") rec.V = std::move(M);
        else rec.fisher = std::move(M);
        rec.dtypes[tensor] = dtype;
      }
      bundle.layers.emplace_back(name, std::move(rec));
    }
  } catch (const bundle_error&) {
    throw;
  } catch (const geomerge_error&) {
    throw;
  } catch (const std::exception& e) {
    throw bundle_error(BundleErrc::invalid_manifest,
                       "bundle: malformed manifest: " + std::string(e.what()));
  }
  validate_bundle(bundle);
  return bundle;
}

/// Convert every layer to the polar representation, folding |scale| into B
/// and its sign into V; lowrank layers run through from_lowrank with
/// per-layer clamp warnings aggregated into `warnings`.
inline AdapterBundle to_polar_bundle(const AdapterBundle& bundle,
                                     std::vector<std::string>* warnings = nullptr) {
  validate_bundle(bundle);
  AdapterBundle out;
  out.name = bundle.name;
  out.base_model = bundle.base_model;
  out.metadata = bundle.metadata;
  for (const auto& [name, rec] : bundle.layers) {
    if (rec.scale == 0.0)
      throw invalid_input("to_polar_bundle: layer '" + name + "' has zero scale");
    PolarPoint p;
    if (rec.repr == LayerRepr::lowrank) {
      std::vector<std::string> local;
      p = from_lowrank(rec.G, rec.H, &local);
      if (warnings)
        for (const std::string& w : local) warnings->push_back("layer '" + name + "': " + w);
    } else {
      p = PolarPoint{rec.U, rec.B, rec.V};
      validate_polar_point(p);
    }
    if (rec.scale != 1.0) {
      p.B *= std::abs(rec.scale);
      if (rec.scale < 0.0) p.V = -p.V;
    }
    LayerRecord nr;
    nr.d_out = rec.d_out;
    nr.d_in = rec.d_in;
    nr.rank = rec.rank;
    nr.repr = LayerRepr::polar;
    nr.scale = 1.0;
    nr.U = std::move(p.U);
    nr.B = std::move(p.B);
    nr.V = std::move(p.V);
    nr.fisher = rec.fisher;
    if (rec.repr == LayerRepr::polar)
      nr.dtypes = rec.dtypes;  // value-preserving pass-through keeps storage dtypes too
    else if (rec.has_fisher())
      nr.dtypes["fisher"] = rec.dtype_of("fisher");
    out.layers.emplace_back(name, std::move(nr));
  }
  return out;
}

/// Polar layer record from a PolarPoint (helper for merge outputs).
inline LayerRecord make_polar_layer(const PolarPoint& p) {
  LayerRecord rec;
  rec.d_out = p.d_out();
  rec.d_in = p.d_in();
  rec.rank = p.rank();
  rec.repr = LayerRepr::polar;
  rec.U = p.U;
  rec.B = p.B;
  rec.V = p.V;
  return rec;
}

/// Lowrank layer record from thin factors (helper for baseline outputs).
inline LayerRecord make_lowrank_layer(const DenseMatrix& G, const DenseMatrix& H) {
  LayerRecord rec;
  rec.d_out = G.rows();
  rec.d_in = H.rows();
  rec.rank = G.cols();
  rec.repr = LayerRepr::lowrank;
  rec.G = G;
  rec.H = H;
  return rec;
}

}  // namespace geomerge
