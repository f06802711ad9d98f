#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <unistd.h>

#include "geomerge/bundle.hpp"
#include "test_util.hpp"

using namespace geomerge;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  const fs::path p = fs::temp_directory_path() /
                     ("geomerge_bundle_" + tag + "_" + std::to_string(::getpid()) + "_" +
                      std::to_string(counter++));
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  EXPECT_TRUE(in.good()) << file;
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  ASSERT_TRUE(out.good()) << file;
}

AdapterBundle sample_bundle(std::uint64_t seed = 3) {
  AdapterBundle b;
  b.name = "sample";
  b.base_model = "base-v1";
  b.metadata["note"] = "fixture";
  LayerRecord lr =
      make_lowrank_layer(gmtest::gaussian(6, 2, seed), gmtest::gaussian(5, 2, seed + 1));
  lr.fisher = gmtest::gaussian(6, 5, seed + 2).cwiseAbs();
  b.layers.emplace_back("layers.0.attn", lr);
  LayerRecord pr = make_polar_layer(gmtest::polar_point(7, 4, 2, seed + 3));
  b.layers.emplace_back("layers.1.mlp", pr);
  return b;
}

struct TempBundle {
  fs::path path;
  explicit TempBundle(const std::string& tag) : path(fresh_dir(tag)) {}
  ~TempBundle() {
    std::error_code ec;
    fs::remove_all(path, ec);
    fs::path tmp = path;
    tmp += ".tmp";
    fs::remove_all(tmp, ec);
  }
};

}  // namespace

TEST(Crc32c, PinnedTestVectors) {
  const std::string check = "123456789";
  EXPECT_EQ(detail::crc32c_hex(reinterpret_cast<const unsigned char*>(check.data()),
                               check.size()),
            "e3069283");
  EXPECT_EQ(detail::crc32c_hex(nullptr, 0), "00000000");
  const unsigned char zeros[8] = {};
  EXPECT_EQ(detail::crc32c_hex(zeros, 8), "8c28b28a");
}

TEST(BundleIo, Float64RoundTripIsExact) {
  TempBundle tb("rt64");
  const AdapterBundle b = sample_bundle();
  write_bundle(b, tb.path);
  const AdapterBundle r = read_bundle(tb.path);
  EXPECT_EQ(r.name, b.name);
  EXPECT_EQ(r.base_model, b.base_model);
  EXPECT_EQ(r.metadata, b.metadata);
  ASSERT_EQ(r.layers.size(), b.layers.size());
  for (std::size_t i = 0; i < b.layers.size(); ++i) {
    EXPECT_EQ(r.layers[i].first, b.layers[i].first);
    const LayerRecord& a = b.layers[i].second;
    const LayerRecord& c = r.layers[i].second;
    EXPECT_EQ(c.repr, a.repr);
    EXPECT_EQ(c.scale, a.scale);
    for (const std::string& tensor : detail::layer_tensor_names(a)) {
      const DenseMatrix& ma = detail::layer_tensor(a, tensor);
      const DenseMatrix& mc = detail::layer_tensor(c, tensor);
      ASSERT_EQ(mc.rows(), ma.rows());
      ASSERT_EQ(mc.cols(), ma.cols());
      EXPECT_EQ((ma - mc).norm(), 0.0) << tensor;  // f64 storage is bit-exact
      EXPECT_EQ(c.dtype_of(tensor), TensorDtype::f64);
    }
  }
}

TEST(BundleIo, ManifestKeyOrderIsStable) {
  TempBundle tb("order");
  write_bundle(sample_bundle(), tb.path);
  const std::string text = slurp(tb.path / "manifest.json");
  const std::size_t p_version = text.find("\"format_version\"");
  const std::size_t p_name = text.find("\"name\"");
  const std::size_t p_base = text.find("\"base_model\"");
  const std::size_t p_layers = text.find("\"layers\"");
  const std::size_t p_meta = text.find("\"metadata\"");
  ASSERT_NE(p_version, std::string::npos);
  ASSERT_NE(p_meta, std::string::npos);
  EXPECT_LT(p_version, p_name);
  EXPECT_LT(p_name, p_base);
  EXPECT_LT(p_base, p_layers);
  EXPECT_LT(p_layers, p_meta);
}

TEST(BundleIo, Float32StorageRoundsAndSurvivesRewrite) {
  TempBundle tb("rt32");
  AdapterBundle b = sample_bundle();
  b.layers[0].second.dtypes["G"] = TensorDtype::f32;
  write_bundle(b, tb.path);
  const AdapterBundle r = read_bundle(tb.path);
  const DenseMatrix& g0 = b.layers[0].second.G;
  const DenseMatrix& g1 = r.layers[0].second.G;
  EXPECT_GT((g0 - g1).norm(), 0.0);  // f32 quantization is visible
  EXPECT_LT((g0 - g1).norm(), 1e-6 * g0.norm());
  EXPECT_EQ(r.layers[0].second.dtype_of("G"), TensorDtype::f32);
  EXPECT_EQ(r.layers[0].second.dtype_of("H"), TensorDtype::f64);
  // Re-writing what we read keeps the declared storage dtype.
  TempBundle tb2("rt32b");
  write_bundle(r, tb2.path);
  const AdapterBundle r2 = read_bundle(tb2.path);
  EXPECT_EQ(r2.layers[0].second.dtype_of("G"), TensorDtype::f32);
  EXPECT_EQ((r.layers[0].second.G - r2.layers[0].second.G).norm(), 0.0);
}

TEST(BundleIo, WriteTwiceIsByteIdentical) {
  TempBundle ta("dupA");
  TempBundle tc("dupB");
  const AdapterBundle b = sample_bundle();
  write_bundle(b, ta.path);
  write_bundle(b, tc.path);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(ta.path))
    files.push_back(entry.path().filename());
  ASSERT_FALSE(files.empty());
  for (const fs::path& f : files) {
    ASSERT_TRUE(fs::exists(tc.path / f)) << f;
    EXPECT_EQ(slurp(ta.path / f), slurp(tc.path / f)) << f;
  }
}

TEST(BundleIo, NoTempResidueAndOverwriteWorks) {
  TempBundle tb("atomic");
  write_bundle(sample_bundle(3), tb.path);
  fs::path tmp = tb.path;
  tmp += ".tmp";
  EXPECT_FALSE(fs::exists(tmp));
  // Overwriting an existing bundle replaces it wholesale.
  AdapterBundle b2 = sample_bundle(4);
  b2.layers.resize(1);
  write_bundle(b2, tb.path);
  EXPECT_FALSE(fs::exists(tmp));
  const AdapterBundle r = read_bundle(tb.path);
  EXPECT_EQ(r.layers.size(), 1u);
}

TEST(BundleIo, CorruptTensorByteFailsChecksum) {
  TempBundle tb("crc");
  write_bundle(sample_bundle(), tb.path);
  std::string bytes = slurp(tb.path / "t0_G.bin");
  bytes.back() = static_cast<char>(bytes.back() ^ 0x01);
  spit(tb.path / "t0_G.bin", bytes);
  try {
    read_bundle(tb.path);
    FAIL() << "corrupt tensor was accepted";
  } catch (const bundle_error& e) {
    EXPECT_EQ(e.code, BundleErrc::checksum_mismatch);
  }
}

TEST(BundleIo, TruncatedTensorReportsShapeMismatch) {
  TempBundle tb("trunc");
  write_bundle(sample_bundle(), tb.path);
  std::string bytes = slurp(tb.path / "t0_H.bin");
  bytes.resize(bytes.size() - 8);
  spit(tb.path / "t0_H.bin", bytes);
  try {
    read_bundle(tb.path);
    FAIL() << "truncated tensor was accepted";
  } catch (const bundle_error& e) {
    EXPECT_EQ(e.code, BundleErrc::shape_mismatch);
  }
}

TEST(BundleIo, UnsupportedFormatVersionIsRejected) {
  TempBundle tb("ver");
  write_bundle(sample_bundle(), tb.path);
  std::string text = slurp(tb.path / "manifest.json");
  const std::string needle = "\"format_version\": 1";
  const std::size_t pos = text.find(needle);
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, needle.size(), "\"format_version\": 2");
  spit(tb.path / "manifest.json", text);
  try {
    read_bundle(tb.path);
    FAIL() << "future format version was accepted";
  } catch (const bundle_error& e) {
    EXPECT_EQ(e.code, BundleErrc::unknown_format_version);
  }
}

TEST(BundleIo, ManifestJunkIsAParseError) {
  TempBundle tb("junk");
  write_bundle(sample_bundle(), tb.path);
  spit(tb.path / "manifest.json", "{ not json !!");
  try {
    read_bundle(tb.path);
    FAIL() << "junk manifest was accepted";
  } catch (const bundle_error& e) {
    EXPECT_EQ(e.code, BundleErrc::parse_error);
  }
}

TEST(BundleIo, MissingPiecesAreReported) {
  TempBundle tb("missing");
  write_bundle(sample_bundle(), tb.path);
  fs::remove(tb.path / "t1_U.bin");
  try {
    read_bundle(tb.path);
    FAIL() << "missing tensor file was accepted";
  } catch (const bundle_error& e) {
    EXPECT_EQ(e.code, BundleErrc::missing_file);
  }
  try {
    read_bundle(fresh_dir("nowhere"));
    FAIL() << "missing bundle directory was accepted";
  } catch (const bundle_error& e) {
    EXPECT_EQ(e.code, BundleErrc::missing_file);
  }
}

TEST(BundleIo, DeclaredShapeMustMatchLayerDims) {
  TempBundle tb("shape");
  write_bundle(sample_bundle(), tb.path);
  // The G tensor of layer 0 is 6x2; lie about it in the manifest.
  nlohmann::ordered_json manifest =
      nlohmann::ordered_json::parse(slurp(tb.path / "manifest.json"));
  manifest["layers"][0]["tensors"]["G"]["shape"] = {6, 3};
  spit(tb.path / "manifest.json", manifest.dump(2) + "\n");
  try {
    read_bundle(tb.path);
    FAIL() << "shape lie was accepted";
  } catch (const bundle_error& e) {
    EXPECT_EQ(e.code, BundleErrc::shape_mismatch);
  }
}

TEST(BundleValidate, StructuralInvariants) {
  AdapterBundle dup = sample_bundle();
  dup.layers.push_back(dup.layers[0]);
  EXPECT_THROW(validate_bundle(dup), invalid_input);

  AdapterBundle bad_rank = sample_bundle();
  bad_rank.layers[0].second.rank = 99;
  EXPECT_THROW(validate_bundle(bad_rank), invalid_input);

  AdapterBundle bad_shape = sample_bundle();
  bad_shape.layers[0].second.G = DenseMatrix::Zero(6, 3);
  EXPECT_THROW(validate_bundle(bad_shape), invalid_input);

  AdapterBundle bad_value = sample_bundle();
  bad_value.layers[0].second.H(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(validate_bundle(bad_value), invalid_input);

  AdapterBundle no_name = sample_bundle();
  no_name.layers[0].first.clear();
  EXPECT_THROW(validate_bundle(no_name), invalid_input);

  // write_bundle validates up front and must not leave output behind.
  TempBundle tb("reject");
  EXPECT_THROW(write_bundle(dup, tb.path), invalid_input);
  EXPECT_FALSE(fs::exists(tb.path));
}

TEST(BundleQuery, FindLayerByName) {
  const AdapterBundle b = sample_bundle();
  ASSERT_NE(b.find_layer("layers.1.mlp"), nullptr);
  EXPECT_EQ(b.find_layer("layers.1.mlp")->repr, LayerRepr::polar);
  EXPECT_EQ(b.find_layer("absent"), nullptr);
}

TEST(PolarConversion, ScaleFoldsIntoFactors) {
  AdapterBundle b;
  b.name = "scaled";
  b.base_model = "base";
  LayerRecord lr =
      make_lowrank_layer(gmtest::gaussian(6, 2, 111), gmtest::gaussian(5, 2, 112));
  lr.scale = 3.0;
  b.layers.emplace_back("pos", lr);
  LayerRecord neg = lr;
  neg.scale = -2.0;
  b.layers.emplace_back("neg", neg);

  const AdapterBundle pb = to_polar_bundle(b);
  const DenseMatrix delta = lr.G * lr.H.transpose();
  const LayerRecord* pos = pb.find_layer("pos");
  const LayerRecord* negp = pb.find_layer("neg");
  ASSERT_NE(pos, nullptr);
  ASSERT_NE(negp, nullptr);
  EXPECT_EQ(pos->scale, 1.0);
  EXPECT_EQ(negp->scale, 1.0);
  EXPECT_MAT_NEAR(DenseMatrix(pos->U * pos->B * pos->V.transpose()), DenseMatrix(3.0 * delta),
                  1e-10);
  EXPECT_MAT_NEAR(DenseMatrix(negp->U * negp->B * negp->V.transpose()),
                  DenseMatrix(-2.0 * delta), 1e-10);
  // Both stay valid polar points (B symmetric positive definite).
  EXPECT_NO_THROW(validate_polar_point(PolarPoint{pos->U, pos->B, pos->V}));
  EXPECT_NO_THROW(validate_polar_point(PolarPoint{negp->U, negp->B, negp->V}));
}

TEST(PolarConversion, ZeroScaleIsRejected) {
  AdapterBundle b;
  b.name = "zero";
  b.base_model = "base";
  LayerRecord lr =
      make_lowrank_layer(gmtest::gaussian(4, 2, 121), gmtest::gaussian(4, 2, 122));
  lr.scale = 0.0;
  b.layers.emplace_back("z", lr);
  EXPECT_THROW(to_polar_bundle(b), invalid_input);
}

TEST(PolarConversion, PolarLayersPassThroughUnchanged) {
  AdapterBundle b;
  b.name = "pass";
  b.base_model = "base";
  LayerRecord pr = make_polar_layer(gmtest::polar_point(6, 5, 2, 131));
  pr.dtypes["U"] = TensorDtype::f32;
  b.layers.emplace_back("p", pr);
  const AdapterBundle pb = to_polar_bundle(b);
  const LayerRecord* out = pb.find_layer("p");
  ASSERT_NE(out, nullptr);
  EXPECT_EQ((out->U - pr.U).norm(), 0.0);
  EXPECT_EQ((out->B - pr.B).norm(), 0.0);
  EXPECT_EQ((out->V - pr.V).norm(), 0.0);
  EXPECT_EQ(out->dtype_of("U"), TensorDtype::f32);
}

TEST(PolarConversion, NearRankDeficientFactorsWarnWithLayerName) {
  DenseMatrix G = gmtest::gaussian(8, 2, 141);
  G.col(1) = 1e-20 * gmtest::gaussian(8, 1, 142);
  AdapterBundle b;
  b.name = "clamped";
  b.base_model = "base";
  b.layers.emplace_back("weak", make_lowrank_layer(G, gmtest::gaussian(7, 2, 143)));
  std::vector<std::string> warnings;
  const AdapterBundle pb = to_polar_bundle(b, &warnings);
  ASSERT_GE(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("'weak'"), std::string::npos) << warnings[0];
  EXPECT_NO_THROW(validate_polar_point(PolarPoint{pb.layers[0].second.U, pb.layers[0].second.B,
                                                  pb.layers[0].second.V}));
}
