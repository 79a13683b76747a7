#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include "support/tmpdir.hpp"
#include "vsd/checkpoint.hpp"
#include "vsd/errors.hpp"
#include "vsd/model.hpp"
#include "vsd/rng.hpp"

using namespace vsd;
using vsd::testing::TmpDir;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

ArrayMap sample_arrays() {
  ArrayMap m;
  MatX<double> a(2, 3);
  a << 1.5, -2.25, 0.0, 1e-300, -1e300, 3.141592653589793;
  m["group/a"] = a;
  m["group/b"] = MatX<double>::Identity(4, 4);
  m["scalar"] = scalar_array(42.0);
  m["empty"] = MatX<double>(0, 0);
  return m;
}

}  // namespace

TEST_CASE("arrays round-trip with the stored hash") {
  TmpDir dir("ckpt");
  const auto path = dir.path() / "a.bin";
  const ArrayMap arrays = sample_arrays();
  save_arrays(path, arrays, 0xdeadbeefcafe1234ULL);

  std::uint64_t hash = 0;
  const ArrayMap loaded = load_arrays(path, &hash);
  CHECK(hash == 0xdeadbeefcafe1234ULL);
  REQUIRE(loaded.size() == arrays.size());
  for (const auto& [name, mat] : arrays) {
    REQUIRE(loaded.count(name) == 1);
    const auto& got = loaded.at(name);
    REQUIRE(got.rows() == mat.rows());
    REQUIRE(got.cols() == mat.cols());
    CHECK((got.size() == 0 || got.cwiseEqual(mat).all()));
  }
}

TEST_CASE("identical content saves byte-identically") {
  TmpDir dir("ckpt");
  const auto p1 = dir.path() / "one.bin";
  const auto p2 = dir.path() / "two.bin";
  save_arrays(p1, sample_arrays(), 7);
  save_arrays(p2, sample_arrays(), 7);
  const std::string b1 = read_bytes(p1);
  CHECK(b1.size() > 0);
  CHECK(b1 == read_bytes(p2));
}

TEST_CASE("malformed archives are rejected") {
  TmpDir dir("ckpt");

  CHECK_THROWS_AS(load_arrays(dir.path() / "absent.bin"), IoError);

  const auto bad_magic = dir.path() / "bad.bin";
  std::ofstream(bad_magic, std::ios::binary) << "NOTANARCHIVE____________";
  CHECK_THROWS_AS(load_arrays(bad_magic), CheckpointError);

  const auto good = dir.path() / "good.bin";
  save_arrays(good, sample_arrays(), 1);
  const std::string bytes = read_bytes(good);
  const auto truncated = dir.path() / "trunc.bin";
  std::ofstream(truncated, std::ios::binary)
      << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_arrays(truncated), CheckpointError);
}

TEST_CASE("model groups pack and unpack exactly") {
  ModelConfig cfg;
  cfg.encoder.image_size = 16;
  cfg.encoder.patch_size = 8;
  cfg.encoder.embed_dim = 8;
  cfg.encoder.depth = 1;
  cfg.encoder.heads = 2;
  cfg.num_prototypes = 6;
  cfg.proj_hidden = 8;
  cfg.proj_bottleneck = 4;
  cfg.predictor_hidden = 8;
  cfg.predictor_blocks = 1;

  Rng rng(3);
  StudentModel<double> student(cfg);
  student.init(rng);

  ArrayMap arrays;
  pack_group<double>("student_backbone", student.backbone, arrays);
  pack_group<double>("predictor", student.predictor, arrays);
  pack_group<double>("student_projection", student.projection, arrays);

  for (const auto& [name, mat] : arrays) {
    CHECK((name.starts_with("student_backbone/") || name.starts_with("predictor/") ||
           name.starts_with("student_projection/")));
  }

  StudentModel<double> restored(cfg);  // left at zero init
  unpack_group<double>("student_backbone", restored.backbone, arrays);
  unpack_group<double>("predictor", restored.predictor, arrays);
  unpack_group<double>("student_projection", restored.projection, arrays);

  std::vector<Param<double>*> a = collect_params<double>(student);
  std::vector<Param<double>*> b = collect_params<double>(restored);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value.cwiseEqual(b[i]->value).all());
  }
}

TEST_CASE("unpack rejects missing and misshapen arrays") {
  ModelConfig cfg;
  cfg.encoder.image_size = 16;
  cfg.encoder.patch_size = 8;
  cfg.encoder.embed_dim = 8;
  cfg.encoder.depth = 1;
  cfg.encoder.heads = 2;
  cfg.num_prototypes = 6;
  cfg.proj_hidden = 8;
  cfg.proj_bottleneck = 4;

  Rng rng(5);
  TeacherModel<double> teacher(cfg);

  ArrayMap arrays;
  pack_group<double>("teacher_backbone", teacher.backbone, arrays);

  TeacherModel<double> other(cfg);
  CHECK_NOTHROW(unpack_group<double>("teacher_backbone", other.backbone, arrays));
  CHECK_THROWS_AS(unpack_group<double>("teacher_projection", other.projection, arrays),
                  CheckpointError);

  arrays["teacher_backbone/backbone.cls"] = MatX<double>::Zero(2, 2);
  CHECK_THROWS_AS(unpack_group<double>("teacher_backbone", other.backbone, arrays),
                  CheckpointError);
}

TEST_CASE("scalars store and fetch") {
  ArrayMap m;
  m["step"] = scalar_array(123.0);
  CHECK(fetch_scalar(m, "step") == 123.0);
  CHECK_THROWS_AS(fetch_scalar(m, "missing"), CheckpointError);
  m["wide"] = MatX<double>::Zero(1, 2);
  CHECK_THROWS_AS(fetch_scalar(m, "wide"), CheckpointError);
}
