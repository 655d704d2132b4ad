#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dpmvs/data_model.hpp"

using namespace dpmvs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dpmvs_data_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

const char* kSchema = R"([
  {"name": "score", "kind": "continuous", "lower": 0},
  {"name": "grade", "kind": "ordinal", "levels": [1, 2, 3]},
  {"name": "x", "kind": "continuous"}
])";

std::string error_of(const fs::path& data, const fs::path& schema) {
  try {
    load_dataset(data, schema);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("csv and schema load with missing cells and header reordering") {
  TempDir t;
  const auto schema = t.write("s.json", kSchema);
  const auto data = t.write("d.csv", "x,grade,score\n1.5,2,0\nNA,3,4.25\n-2,,1\n0.5,1,2\n");
  const Dataset ds = load_dataset(data, schema);
  CHECK(ds.rows() == 4);
  CHECK(ds.cols() == 3);
  CHECK(ds.value(1, 0) == 4.25);
  CHECK(ds.value(0, 2) == 1.5);
  CHECK_FALSE(ds.observed(1, 2));
  CHECK_FALSE(ds.observed(2, 1));
  CHECK(ds.state(0, 0) == CellState::lower_censored);
  CHECK(ds.state(1, 0) == CellState::interior);
  CHECK(ds.state(0, 1) == CellState::ordinal);
  CHECK(ds.level_index(1, 1) == 2);
  CHECK(ds.missing_count() == 2);
}

TEST_CASE("validation errors name the row and column") {
  TempDir t;
  const auto schema = t.write("s.json", kSchema);
  CHECK(error_of(t.write("a.csv", "score,grade,x\n-1,1,0\n"), schema).find("column 'score'") !=
        std::string::npos);
  const auto lvl = error_of(t.write("b.csv", "score,grade,x\n1,1,0\n1,4,0\n"), schema);
  CHECK(lvl.find("row 2") != std::string::npos);
  CHECK(lvl.find("grade") != std::string::npos);
  CHECK(error_of(t.write("c.csv", "score,grade,x\n1,1,abc\n"), schema).find("abc") != std::string::npos);
  CHECK(error_of(t.write("d.csv", "score,grade,y\n1,1,0\n"), schema).find("unknown column 'y'") !=
        std::string::npos);
  CHECK(error_of(t.write("e.csv", "score,grade\n1,1\n"), schema).find("'x' missing") != std::string::npos);
  CHECK(error_of(t.write("f.csv", "score,grade,x\n1,1\n"), schema).find("line 2") != std::string::npos);
  CHECK(error_of(t.path / "nope.csv", schema).find("nope.csv") != std::string::npos);
}

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(parse_schema_json(R"([{"name":"a","kind":"ordinal","levels":[2,1]}])"), DataError);
  CHECK_THROWS_AS(parse_schema_json(R"([{"name":"a","kind":"ordinal","levels":[1]}])"), DataError);
  CHECK_THROWS_AS(parse_schema_json(R"([{"name":"a","kind":"continuous","lower":1,"upper":0}])"), DataError);
  CHECK_THROWS_AS(parse_schema_json(R"([{"name":"a","kind":"weird"}])"), DataError);
  CHECK_THROWS_AS(parse_schema_json("{}"), DataError);
  const auto s = parse_schema_json(schema_to_json(parse_schema_json(kSchema)));
  REQUIRE(s.size() == 3);
  CHECK(s[0].lower == 0.0);
  CHECK(std::isinf(s[0].upper));
  CHECK(s[1].cut_points() == std::vector<double>{1, 2});
}

TEST_CASE("save and reload is bit exact") {
  TempDir t;
  Matrix y(3, 2);
  y << 0.1, 1, 1.0 / 3.0, 2, -7.25e-300, 1;
  std::vector<std::vector<bool>> obs = {{true, true}, {false, true}, {true, true}};
  std::vector<VariableSchema> schema(2);
  schema[0].name = "a";
  schema[1].name = "b";
  schema[1].kind = VariableKind::ordinal;
  schema[1].levels = {1, 2};
  const Dataset ds(y, obs, schema);
  save_dataset(ds, t.path / "d.csv", t.path / "s.json");
  const Dataset back = load_dataset(t.path / "d.csv", t.path / "s.json");
  CHECK(back.value(0, 0) == 0.1);
  CHECK(back.value(2, 0) == -7.25e-300);
  CHECK_FALSE(back.observed(1, 0));
  CHECK(back.level_index(1, 1) == 1);
}

TEST_CASE("standardize maps values, bounds and levels through the same affine map") {
  Matrix y(4, 2);
  y << 0, 1, 2, 2, 4, 3, 6, 3;
  std::vector<std::vector<bool>> obs(4, {true, true});
  std::vector<VariableSchema> schema(2);
  schema[0].name = "a";
  schema[0].lower = 0.0;
  schema[1].name = "b";
  schema[1].kind = VariableKind::ordinal;
  schema[1].levels = {1, 2, 3};
  const Dataset s = standardize(Dataset(y, obs, schema));
  const double sd_a = std::sqrt((9.0 + 1.0 + 1.0 + 9.0) / 3.0);
  CHECK(s.value(0, 0) == doctest::Approx(-3.0 / sd_a));
  CHECK(s.schema()[0].lower == doctest::Approx(-3.0 / sd_a));
  CHECK(s.state(0, 0) == CellState::lower_censored);
  double mean_b = 0.0, ss_b = 0.0;
  for (int i = 0; i < 4; ++i) mean_b += s.value(i, 1) / 4.0;
  for (int i = 0; i < 4; ++i) ss_b += (s.value(i, 1) - mean_b) * (s.value(i, 1) - mean_b);
  CHECK(mean_b == doctest::Approx(0.0).scale(1.0));
  CHECK(ss_b / 3.0 == doctest::Approx(1.0));
  CHECK(s.schema()[1].levels[2] == doctest::Approx(s.value(2, 1)));
  CHECK(s.standardizer().invert(0, s.value(3, 0)) == doctest::Approx(6.0));

  Matrix c(3, 1);
  c << 1, 1, 1;
  std::vector<VariableSchema> one(1);
  one[0].name = "flat";
  CHECK_THROWS_AS(standardize(Dataset(c, {{true}, {true}, {true}}, one)), DataError);
}

TEST_CASE("latent intervals follow the thresholding rule") {
  Matrix y(5, 2);
  y << 1, 0.0, 2, 5.0, 3, 2.0, 1, 1.0, 2, 3.0;
  std::vector<std::vector<bool>> obs(5, {true, true});
  obs[4][1] = false;
  std::vector<VariableSchema> schema(2);
  schema[0].name = "o";
  schema[0].kind = VariableKind::ordinal;
  schema[0].levels = {1, 2, 3};
  schema[1].name = "c";
  schema[1].lower = 0.0;
  schema[1].upper = 5.0;
  const Dataset ds(y, obs, schema);
  auto lo = latent_interval(ds, 0, 0);
  CHECK(std::isinf(lo.lo));
  CHECK(lo.hi == 1.0);
  auto mid = latent_interval(ds, 1, 0);
  CHECK(mid.lo == 1.0);
  CHECK(mid.hi == 2.0);
  auto top = latent_interval(ds, 2, 0);
  CHECK(top.lo == 2.0);
  CHECK(std::isinf(top.hi));
  auto left = latent_interval(ds, 0, 1);
  CHECK(std::isinf(left.lo));
  CHECK(left.hi == 0.0);
  auto right = latent_interval(ds, 1, 1);
  CHECK(right.lo == 5.0);
  CHECK(std::isinf(right.hi));
  auto point = latent_interval(ds, 2, 1);
  CHECK_FALSE(point.is_latent());
  CHECK(*point.point == 2.0);
  CHECK(latent_interval(ds, 4, 1).is_latent());

  RngStream rng(3, 0);
  const Matrix z = initialize_latent(ds, rng);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 2; ++j) CHECK(latent_interval(ds, i, j).contains(z(i, j)));
  }

  const Dataset cont = as_continuous(ds);
  CHECK_FALSE(latent_interval(cont, 0, 0).is_latent());
  CHECK_FALSE(latent_interval(cont, 1, 1).is_latent());
  CHECK(latent_interval(cont, 4, 1).is_latent());
}
