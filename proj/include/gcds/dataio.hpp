#pragma once

// Paired (X, Y) datasets: CSV ingestion with a JSON schema sidecar,
// one-hot encoding, train/test splitting and column standardization.

#include "gcds/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gcds::data {

// `indicator` marks a column produced by one-hot expansion.
enum class ColumnKind { continuous, categorical, indicator };
enum class ColumnRole { covariate, response };

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<std::string> levels;  // categorical only
  ColumnRole role = ColumnRole::covariate;

  bool operator==(const ColumnSchema&) const = default;
};

using Schema = std::vector<ColumnSchema>;

struct PairedDataset {
  Matrix x;  // n x d
  Matrix y;  // n x q
  Schema covariates;  // one entry per column of x
  Schema responses;   // one entry per column of y
  std::string provenance;

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index covariate_dim() const { return x.cols(); }
  Eigen::Index response_dim() const { return y.cols(); }

  bool has_categorical() const {
    return std::any_of(covariates.begin(), covariates.end(),
                       [](const ColumnSchema& c) { return c.kind == ColumnKind::categorical; });
  }

  bool operator==(const PairedDataset& o) const {
    return x == o.x && y == o.y && covariates == o.covariates && responses == o.responses;
  }
};

inline Schema continuous_columns(const std::string& prefix, Eigen::Index count,
                                 ColumnRole role) {
  Schema s;
  for (Eigen::Index i = 0; i < count; ++i)
    s.push_back({prefix + std::to_string(i + 1), ColumnKind::continuous, {}, role});
  return s;
}

// --- schema sidecar -----------------------------------------------------

inline Schema schema_from_json(const nlohmann::json& j) {
  Schema schema;
  for (const auto& c : j.at("columns")) {
    ColumnSchema col;
    col.name = c.at("name").get<std::string>();
    const auto kind = c.at("kind").get<std::string>();
    if (kind == "continuous") {
      col.kind = ColumnKind::continuous;
    } else if (kind == "categorical") {
      col.kind = ColumnKind::categorical;
      col.levels = c.at("levels").get<std::vector<std::string>>();
      require(!col.levels.empty(), ErrorKind::invalid_input,
              "categorical column '" + col.name + "' has no levels");
      auto sorted = col.levels;
      std::sort(sorted.begin(), sorted.end());
      require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
              ErrorKind::invalid_input, "categorical column '" + col.name + "' repeats a level");
    } else {
      fail(ErrorKind::invalid_input, "column '" + col.name + "' has unknown kind '" + kind + "'");
    }
    const auto role = c.value("role", std::string("covariate"));
    if (role == "covariate") col.role = ColumnRole::covariate;
    else if (role == "response") col.role = ColumnRole::response;
    else fail(ErrorKind::invalid_input, "column '" + col.name + "' has unknown role '" + role + "'");
    schema.push_back(std::move(col));
  }
  const auto n_resp = std::count_if(schema.begin(), schema.end(), [](const ColumnSchema& c) {
    return c.role == ColumnRole::response;
  });
  require(n_resp >= 1, ErrorKind::invalid_input, "schema needs at least one response column");
  for (const auto& c : schema)
    require(!(c.role == ColumnRole::response && c.kind == ColumnKind::categorical),
            ErrorKind::unsupported, "categorical responses are not supported");
  return schema;
}

inline Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open schema file '" + path + "'");
  try {
    return schema_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_input, "malformed schema '" + path + "': " + e.what());
  }
}

// --- CSV ----------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Strict finite double parse; rejects nan/inf and trailing garbage.
inline bool parse_finite(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline PairedDataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::invalid_input, path + ": empty file");
  const auto header = detail::split_fields(line);

  std::vector<std::size_t> field_of(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), schema[c].name);
    if (it == header.end())
      fail(ErrorKind::invalid_input, path + ": missing column '" + schema[c].name + "'");
    field_of[c] = static_cast<std::size_t>(it - header.begin());
  }

  PairedDataset ds;
  for (const auto& c : schema)
    (c.role == ColumnRole::covariate ? ds.covariates : ds.responses).push_back(c);

  std::vector<std::vector<double>> xs, ys;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != header.size())
      fail(ErrorKind::invalid_input, path + ":" + std::to_string(line_no) + ": expected " +
                                         std::to_string(header.size()) + " fields, got " +
                                         std::to_string(fields.size()));
    std::vector<double> xrow, yrow;
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const auto cell = fields[field_of[c]];
      double value = 0.0;
      if (schema[c].kind == ColumnKind::categorical) {
        const auto& lv = schema[c].levels;
        auto it = std::find(lv.begin(), lv.end(), cell);
        if (it == lv.end())
          fail(ErrorKind::invalid_input, path + ":" + std::to_string(line_no) + ": column '" +
                                             schema[c].name + "' has unknown level '" +
                                             std::string(cell) + "'");
        value = static_cast<double>(it - lv.begin());
      } else if (!detail::parse_finite(cell, value)) {
        fail(ErrorKind::invalid_input, path + ":" + std::to_string(line_no) + ": column '" +
                                           schema[c].name + "' has non-numeric value '" +
                                           std::string(cell) + "'");
      }
      (schema[c].role == ColumnRole::covariate ? xrow : yrow).push_back(value);
    }
    xs.push_back(std::move(xrow));
    ys.push_back(std::move(yrow));
  }

  const auto n = static_cast<Eigen::Index>(xs.size());
  ds.x.resize(n, static_cast<Eigen::Index>(ds.covariates.size()));
  ds.y.resize(n, static_cast<Eigen::Index>(ds.responses.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < ds.x.cols(); ++j) ds.x(i, j) = xs[i][j];
    for (Eigen::Index j = 0; j < ds.y.cols(); ++j) ds.y(i, j) = ys[i][j];
  }
  ds.provenance = "csv:" + path;
  return ds;
}

inline std::string to_csv(const PairedDataset& ds) {
  std::ostringstream out;
  bool first = true;
  for (const auto* cols : {&ds.covariates, &ds.responses})
    for (const auto& c : *cols) {
      out << (first ? "" : ",") << c.name;
      first = false;
    }
  out << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.x.cols(); ++j) {
      if (j) out << ',';
      const auto& c = ds.covariates[static_cast<std::size_t>(j)];
      if (c.kind == ColumnKind::categorical)
        out << c.levels.at(static_cast<std::size_t>(ds.x(i, j)));
      else
        out << detail::format_double(ds.x(i, j));
    }
    for (Eigen::Index j = 0; j < ds.y.cols(); ++j)
      out << (ds.x.cols() + j ? "," : "") << detail::format_double(ds.y(i, j));
    out << '\n';
  }
  return out.str();
}

inline nlohmann::json schema_to_json(const PairedDataset& ds) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto* group : {&ds.covariates, &ds.responses})
    for (const auto& c : *group) {
      nlohmann::json j = {{"name", c.name},
                          {"kind", c.kind == ColumnKind::categorical ? "categorical" : "continuous"},
                          {"role", c.role == ColumnRole::covariate ? "covariate" : "response"}};
      if (c.kind == ColumnKind::categorical) j["levels"] = c.levels;
      cols.push_back(j);
    }
  return {{"columns", cols}};
}

// --- preprocessing ------------------------------------------------------

inline PairedDataset one_hot(const PairedDataset& ds) {
  require(ds.has_categorical(), ErrorKind::contract,
          "one_hot requires at least one categorical covariate");
  Eigen::Index width = 0;
  for (const auto& c : ds.covariates)
    width += c.kind == ColumnKind::categorical ? static_cast<Eigen::Index>(c.levels.size()) : 1;

  PairedDataset out;
  out.y = ds.y;
  out.responses = ds.responses;
  out.provenance = ds.provenance + "|one_hot";
  out.x = Matrix::Zero(ds.size(), width);
  Eigen::Index col = 0;
  for (std::size_t j = 0; j < ds.covariates.size(); ++j) {
    const auto& c = ds.covariates[j];
    const auto src = static_cast<Eigen::Index>(j);
    if (c.kind != ColumnKind::categorical) {
      out.x.col(col++) = ds.x.col(src);
      out.covariates.push_back(c);
      continue;
    }
    for (std::size_t l = 0; l < c.levels.size(); ++l)
      out.covariates.push_back({c.name + "=" + c.levels[l], ColumnKind::indicator, {}, c.role});
    for (Eigen::Index i = 0; i < ds.size(); ++i)
      out.x(i, col + static_cast<Eigen::Index>(ds.x(i, src))) = 1.0;
    col += static_cast<Eigen::Index>(c.levels.size());
  }
  return out;
}

inline PairedDataset select_rows(const PairedDataset& ds, const std::vector<Eigen::Index>& rows,
                                 const std::string& tag) {
  PairedDataset out;
  out.covariates = ds.covariates;
  out.responses = ds.responses;
  out.provenance = ds.provenance + "|" + tag;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), ds.x.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()), ds.y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = ds.x.row(rows[i]);
    out.y.row(static_cast<Eigen::Index>(i)) = ds.y.row(rows[i]);
  }
  return out;
}

struct Split {
  PairedDataset train;
  PairedDataset test;
};

// Uniform random permutation; the first floor(fraction * n) rows train.
inline Split split(const PairedDataset& ds, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::invalid_input,
          "train fraction must lie in (0, 1)");
  require(ds.size() >= 2, ErrorKind::invalid_input, "split needs at least 2 rows");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(ds.size()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(ds.size())));
  std::vector<Eigen::Index> tr(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<Eigen::Index> te(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  const auto tag = "seed=" + std::to_string(seed);
  return {select_rows(ds, tr, "train:" + tag), select_rows(ds, te, "test:" + tag)};
}

// Per-column affine standardization (x - mean) / scale.
struct ColumnScaler {
  Vector mean;
  Vector scale;

  static ColumnScaler identity(Eigen::Index dim) {
    return {Vector::Zero(dim), Vector::Ones(dim)};
  }

  // Population SD; zero-spread columns keep scale 1.
  static ColumnScaler fit(const Matrix& m) {
    ColumnScaler s;
    s.mean = m.colwise().mean().transpose();
    s.scale.resize(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double var = (m.col(j).array() - s.mean[j]).square().mean();
      s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  Matrix apply(const Matrix& m) const {
    return ((m.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
  }

  Matrix invert(const Matrix& m) const {
    return ((m.array().rowwise() * scale.transpose().array()).matrix().rowwise() + mean.transpose());
  }
};

inline nlohmann::json scaler_to_json(const ColumnScaler& s) {
  return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())}};
}

inline ColumnScaler scaler_from_json(const nlohmann::json& j) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("scale").get<std::vector<double>>();
  require(m.size() == s.size(), ErrorKind::invalid_input, "scaler mean/scale length mismatch");
  ColumnScaler out;
  out.mean = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
  out.scale = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
  return out;
}

}  // namespace gcds::data
