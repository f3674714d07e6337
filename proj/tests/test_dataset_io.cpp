#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "sgdebias/dataset_io.hpp"
#include "sgdebias/errors.hpp"

using namespace sgdebias;

namespace {

template <typename E>
std::size_t row_of(const std::string& text) {
  try {
    parse_csv_text(text);
  } catch (const E& e) {
    return e.row();
  }
  ADD_FAILURE() << "no error raised";
  return 0;
}

RawData random_records(std::size_t n, int k, std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> level(1, k);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> gauss;
  RawData d;
  for (std::size_t c = 0; c < width; ++c) d.covariate_names.push_back("w" + std::to_string(c + 1));
  for (std::size_t i = 0; i < n; ++i) {
    RawRecord r;
    r.row = i + 1;
    r.s = i < static_cast<std::size_t>(k) ? static_cast<int>(i) + 1 : level(rng);
    r.t = coin(rng) ? 1.0 : 0.0;
    r.y = coin(rng) ? 1.0 : 0.0;
    for (std::size_t c = 0; c < width; ++c) r.w.push_back(gauss(rng));
    d.records.push_back(r);
  }
  return d;
}

}  // namespace

TEST(ParseCsv, SingleRecord) {
  const auto d = parse_csv_text("y,t,s,w1\n1,0,2,0.5");
  ASSERT_EQ(d.records.size(), 1u);
  EXPECT_EQ(d.records[0].y, 1.0);
  EXPECT_EQ(d.records[0].t, 0.0);
  EXPECT_EQ(d.records[0].s, 2);
  EXPECT_EQ(d.records[0].w, std::vector<double>{0.5});
  EXPECT_EQ(d.records[0].row, 1u);
  EXPECT_EQ(d.covariate_names, std::vector<std::string>{"w1"});
}

TEST(ParseCsv, NonBinaryOutcomeReportsRow) {
  EXPECT_THROW(parse_csv_text("y,t,s,w1\n2,0,1,0.5"), NonBinaryOutcome);
  EXPECT_EQ(row_of<NonBinaryOutcome>("y,t,s,w1\n2,0,1,0.5"), 1u);
  EXPECT_EQ(row_of<NonBinaryOutcome>("y,t,s,w1\n1,0,1,0.5\n0,1,1,0.1\n0.5,0,1,0"), 3u);
}

TEST(ParseCsv, MalformedRows) {
  EXPECT_EQ(row_of<MalformedRow>("y,t,s,w1\n1,0,1,0.5\n1,0,1"), 2u);
  EXPECT_EQ(row_of<MalformedRow>("y,t,s,w1\n1,0,1,\n"), 1u);
  EXPECT_EQ(row_of<MalformedRow>("y,t,s,w1\n1,0,1,abc\n"), 1u);
  EXPECT_EQ(row_of<MalformedRow>("y,t,s,w1\n1,2,1,0\n"), 1u);
  EXPECT_EQ(row_of<MalformedRow>("y,t,s,w1\n1,0,0,0\n"), 1u);
  EXPECT_EQ(row_of<MalformedRow>("y,t,s,w1\n1,0,1.5,0\n"), 1u);
  EXPECT_EQ(row_of<MalformedRow>("y,t,s,w1\n1,0,1,inf\n"), 1u);
}

TEST(ParseCsv, HeaderErrors) {
  EXPECT_THROW(parse_csv_text(""), EmptyFile);
  EXPECT_THROW(parse_csv_text("# only a comment\n\n"), EmptyFile);
  EXPECT_THROW(parse_csv_text("y,t,s,w1\n"), EmptyFile);
  EXPECT_THROW(parse_csv_text("y,t,w1\n1,0,0.5"), UnknownColumn);
  EXPECT_THROW(parse_csv_text("y,t,s,age\n1,0,1,0.5"), UnknownColumn);
  EXPECT_THROW(parse_csv_text("y,t,s,w1,w1\n1,0,1,0.5,0.5"), MalformedRow);
}

TEST(ParseCsv, CommentsBlankLinesAndWhitespace) {
  const auto d = parse_csv_text("# hash\ny, t, s, w1, w2\n\n 1 ,1,1, -0.25,3\n# note\n0,0,2,1e-3,0\n");
  ASSERT_EQ(d.records.size(), 2u);
  EXPECT_EQ(d.records[0].w, (std::vector<double>{-0.25, 3.0}));
  EXPECT_EQ(d.records[1].row, 2u);
  EXPECT_EQ(d.records[1].w[0], 1e-3);
}

TEST(ParseCsv, ColumnOrderIsFree) {
  const auto d = parse_csv_text("w1,s,y,t\n0.5,2,1,0");
  EXPECT_EQ(d.records[0].s, 2);
  EXPECT_EQ(d.records[0].y, 1.0);
  EXPECT_EQ(d.records[0].w[0], 0.5);
}

TEST(ParseCsv, RolesSidecarRenamesColumns) {
  const auto roles = ColumnRoles::from_json(
      nlohmann::json{
          {"outcome", "event"}, {"treatment", "statin"}, {"subgroup", "risk"}, {"covariates", {"age"}}, {"K", 3}});
  const auto d = parse_csv_text("event,statin,risk,age\n1,1,2,61\n0,0,1,50\n", roles);
  EXPECT_EQ(d.declared_k, 3);
  EXPECT_EQ(d.covariate_names, std::vector<std::string>{"age"});
  EXPECT_THROW(validate_subgroups(d), DataError);  // level 3 absent
  EXPECT_THROW(parse_csv_text("event,statin,risk,age,bmi\n1,1,2,61,20\n", roles), UnknownColumn);
  EXPECT_THROW(ColumnRoles::from_json(nlohmann::json{{"K", "three"}}), DataError);
}

TEST(ParseCsv, RolesSidecarFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "sgdebias_roles_test.json";
  {
    std::ofstream out(path);
    out << R"({"outcome": "event", "K": 2})";
  }
  const auto roles = ColumnRoles::from_file(path.string());
  EXPECT_EQ(roles.outcome, "event");
  EXPECT_EQ(roles.treatment, "t");
  EXPECT_EQ(roles.k, 2);
  std::filesystem::remove(path);
  EXPECT_THROW(ColumnRoles::from_file(path.string()), DataError);
}

TEST(ParseCsv, MissingFileIsDataError) {
  EXPECT_THROW(parse_csv(std::string("/nonexistent/sgdebias.csv")), DataError);
}

TEST(Subgroups, ContiguityRequired) {
  EXPECT_THROW(validate_subgroups(parse_csv_text("y,t,s,w1\n1,0,1,0\n0,1,3,0\n")), DataError);
  EXPECT_EQ(validate_subgroups(parse_csv_text("y,t,s,w1\n1,0,1,0\n0,1,2,0\n")), 2);
}

TEST(Encode, TreatedRowSelectsItsSubgroup) {
  RawData d = random_records(6, 6, 2, 1);
  d.records[0].t = 1.0;
  d.records[0].s = 3;
  d.records[1].t = 0.0;
  d.records[1].s = 4;
  d.records[2].s = 6;
  const auto e = encode(d, 6);
  VectorXd e3 = VectorXd::Zero(6);
  e3[2] = 1.0;
  EXPECT_EQ(VectorXd(e.z.row(0).transpose()), e3);
  EXPECT_EQ(e.z.row(1).cwiseAbs().sum(), 0.0);
  EXPECT_EQ(e.x.block(2, 1, 1, 5).cwiseAbs().sum(), 0.0);
  EXPECT_EQ(e.forced, 6);
}

TEST(Encode, LabelsAndColumnCount) {
  const auto d = random_records(30, 4, 3, 2);
  const auto e = encode(d, 4);
  EXPECT_EQ(e.x.cols(), 1 + 3 + 3);
  EXPECT_EQ(e.z_labels, (std::vector<std::string>{"z:s=1", "z:s=2", "z:s=3", "z:s=4"}));
  EXPECT_EQ(e.x_labels,
            (std::vector<std::string>{"intercept", "s=1", "s=2", "s=3", "w_1", "w_2", "w_3"}));
  EXPECT_TRUE((e.x.col(0).array() == 1.0).all());
}

TEST(Encode, RoundTripAndRowOrder) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int k = 2 + static_cast<int>(seed % 5);
    const auto d = random_records(200, k, 4, seed);
    const auto e = encode(d, k);
    ASSERT_EQ(e.x.cols(), 1 + (k - 1) + 4);
    for (Index i = 0; i < e.n(); ++i) {
      const auto& r = d.records[static_cast<std::size_t>(i)];
      const auto [t, s] = decode_row(e, i);
      EXPECT_EQ(t, static_cast<int>(r.t));
      EXPECT_EQ(s, r.s);
      EXPECT_EQ(e.y[i], r.y);
      EXPECT_LE(e.z.row(i).sum(), 1.0);
      for (Index c = 0; c < 4; ++c) EXPECT_EQ(e.x(i, k + c), r.w[static_cast<std::size_t>(c)]);
    }
  }
}

TEST(Encode, DegenerateCellsWarnOnly) {
  auto d = parse_csv_text("y,t,s,w1\n1,1,1,0\n0,0,1,0\n1,1,2,0\n0,1,2,1\n");
  const auto warnings = degenerate_cells(d, 2);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("t=0, s=2"), std::string::npos);
  EXPECT_NO_THROW(encode(d, 2));
}
