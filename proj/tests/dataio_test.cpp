#include "gcds/dataio.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

namespace gcds::data {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gcds_dataio_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& body) {
    const auto p = dir_ / name;
    std::ofstream(p) << body;
    return p.string();
  }

  fs::path dir_;
};

Schema abalone_like() {
  return schema_from_json(nlohmann::json::parse(R"({"columns": [
    {"name": "sex", "kind": "categorical", "levels": ["F", "M", "I"], "role": "covariate"},
    {"name": "length", "kind": "continuous", "role": "covariate"},
    {"name": "rings", "kind": "continuous", "role": "response"}]})"));
}

using DataIo = TempDir;

TEST_F(DataIo, LoadsCategoricalAsLevelIndex) {
  const auto path = write("a.csv", "sex,length,rings\nF,0.5,9\nI,0.31,7\nM,0.44,10\n");
  const auto ds = load_csv(path, abalone_like());
  ASSERT_EQ(ds.size(), 3);
  EXPECT_EQ(ds.x(0, 0), 0.0);
  EXPECT_EQ(ds.x(1, 0), 2.0);
  EXPECT_EQ(ds.x(2, 0), 1.0);
  EXPECT_EQ(ds.x(1, 1), 0.31);
  EXPECT_EQ(ds.y(2, 0), 10.0);
}

TEST_F(DataIo, UnknownLevelNamesLineAndColumn) {
  const auto path = write("b.csv", "sex,length,rings\nF,0.5,9\nX,0.31,7\n");
  try {
    load_csv(path, abalone_like());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("sex"), std::string::npos);
  }
}

TEST_F(DataIo, RejectsNonNumericAndNonFinite) {
  for (const char* bad : {"abc", "nan", "inf", "-Infinity", "1.5x", ""}) {
    const auto path = write("c.csv", std::string("sex,length,rings\nF,") + bad + ",9\n");
    EXPECT_THROW(load_csv(path, abalone_like()), Error) << bad;
  }
}

TEST_F(DataIo, MissingColumnAndFile) {
  const auto path = write("d.csv", "sex,rings\nF,9\n");
  EXPECT_THROW(load_csv(path, abalone_like()), Error);
  EXPECT_THROW(load_csv((dir_ / "nope.csv").string(), abalone_like()), Error);
}

TEST_F(DataIo, WriteThenLoadRoundTrips) {
  const auto path = write("e.csv", "length,sex,rings\n0.123456789012345,M,11\n0.2,F,3.25\n");
  const auto ds = load_csv(path, abalone_like());
  const auto again = load_csv(write("f.csv", to_csv(ds)), abalone_like());
  EXPECT_TRUE(ds == again);
  const auto schema2 = schema_from_json(schema_to_json(ds));
  EXPECT_EQ(schema2, abalone_like());
}

TEST(Schema, Validation) {
  EXPECT_THROW(schema_from_json(nlohmann::json::parse(
                   R"({"columns": [{"name": "a", "kind": "continuous", "role": "covariate"}]})")),
               Error);
  EXPECT_THROW(schema_from_json(nlohmann::json::parse(
                   R"({"columns": [{"name": "a", "kind": "categorical", "levels": ["x", "x"]},
                                   {"name": "y", "kind": "continuous", "role": "response"}]})")),
               Error);
}

PairedDataset categorical_dataset(int levels, std::vector<int> labels) {
  PairedDataset ds;
  std::vector<std::string> names;
  for (int l = 0; l < levels; ++l) names.push_back("c" + std::to_string(l));
  ds.covariates = {{"z", ColumnKind::continuous, {}, ColumnRole::covariate},
                   {"label", ColumnKind::categorical, names, ColumnRole::covariate}};
  ds.responses = {{"y", ColumnKind::continuous, {}, ColumnRole::response}};
  const auto n = static_cast<Eigen::Index>(labels.size());
  ds.x.resize(n, 2);
  ds.y = Matrix::Zero(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.x(i, 0) = 0.5 * static_cast<double>(i);
    ds.x(i, 1) = labels[static_cast<std::size_t>(i)];
  }
  return ds;
}

TEST(OneHot, ExpandsEachLevel) {
  const auto ds = one_hot(categorical_dataset(3, {0, 2, 1, 1}));
  EXPECT_EQ(ds.covariate_dim(), 4);
  for (Eigen::Index i = 0; i < ds.size(); ++i) EXPECT_EQ(ds.x.row(i).tail(3).sum(), 1.0);
  EXPECT_EQ(ds.x(1, 3), 1.0);
  EXPECT_EQ(ds.covariates[1].kind, ColumnKind::indicator);
  EXPECT_FALSE(ds.has_categorical());
}

TEST(OneHot, TenLevelUnitVector) {
  const auto ds = one_hot(categorical_dataset(10, {3}));
  Vector expected = Vector::Zero(10);
  expected[3] = 1.0;
  EXPECT_TRUE(ds.x.row(0).tail(10).transpose() == expected);
}

TEST(OneHot, RequiresCategorical) {
  PairedDataset ds;
  ds.x = Matrix::Zero(2, 1);
  ds.y = Matrix::Zero(2, 1);
  ds.covariates = continuous_columns("x", 1, ColumnRole::covariate);
  EXPECT_THROW(one_hot(ds), Error);
}

PairedDataset indexed(Eigen::Index n) {
  PairedDataset ds;
  ds.x.resize(n, 1);
  ds.y.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) ds.x(i, 0) = ds.y(i, 0) = static_cast<double>(i);
  ds.covariates = continuous_columns("x", 1, ColumnRole::covariate);
  ds.responses = continuous_columns("y", 1, ColumnRole::response);
  return ds;
}

TEST(Split, AbaloneSizes) {
  const auto s = split(indexed(4177), 0.9, 1);
  EXPECT_EQ(s.train.size(), 3759);
  EXPECT_EQ(s.test.size(), 418);
}

TEST(Split, DisjointExhaustiveDeterministic) {
  const auto a = split(indexed(101), 0.7, 5);
  const auto b = split(indexed(101), 0.7, 5);
  EXPECT_TRUE(a.train.x == b.train.x);
  EXPECT_EQ(a.train.size(), 70);
  std::set<double> seen;
  for (const auto* part : {&a.train, &a.test})
    for (Eigen::Index i = 0; i < part->size(); ++i) EXPECT_TRUE(seen.insert(part->x(i, 0)).second);
  EXPECT_EQ(seen.size(), 101u);
}

TEST(Split, Preconditions) {
  EXPECT_THROW(split(indexed(10), 0.0, 1), Error);
  EXPECT_THROW(split(indexed(10), 1.0, 1), Error);
  EXPECT_THROW(split(indexed(1), 0.5, 1), Error);
}

TEST(Scaler, StandardizesAndInverts) {
  Rng rng(3);
  const Matrix m = (standard_normal(200, 3, rng).array() * 4.0 + 2.0).matrix();
  const auto s = ColumnScaler::fit(m);
  const Matrix z = s.apply(m);
  EXPECT_LT(z.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(s.invert(z).isApprox(m, 1e-12));
  EXPECT_EQ(ColumnScaler::fit(Matrix::Ones(5, 1)).scale[0], 1.0);
}

TEST(Sample, CheckedInAbaloneSampleLoads) {
  const auto schema = load_schema(GCDS_DATA_DIR "/abalone_schema.json");
  const auto ds = one_hot(load_csv(GCDS_DATA_DIR "/abalone_sample.csv", schema));
  EXPECT_EQ(ds.size(), 30);
  EXPECT_EQ(ds.covariate_dim(), 10);
  for (Eigen::Index i = 0; i < ds.size(); ++i) EXPECT_EQ(ds.x.row(i).head(3).sum(), 1.0);
}

}  // namespace
}  // namespace gcds::data
