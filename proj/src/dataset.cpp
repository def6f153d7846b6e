#include "extctl/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "extctl/error.hpp"

namespace extctl {

std::string to_string(OutcomeKind kind) {
  return kind == OutcomeKind::binary ? "binary" : "continuous";
}

OutcomeKind outcome_kind_from_string(const std::string& s) {
  if (s == "binary") return OutcomeKind::binary;
  if (s == "continuous") return OutcomeKind::continuous;
  throw Error(ErrorCode::ConfigError, "unknown outcome kind '" + s + "'");
}

namespace {

bool is_binary_value(double y) { return y == 0.0 || y == 1.0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

Error parse_error(std::size_t row, const std::string& column, const std::string& what) {
  Error e(ErrorCode::ParseError,
          "row " + std::to_string(row) + ", column '" + column + "': " + what);
  e.row = row;
  e.column = column;
  return e;
}

double parse_real(std::string_view field, std::size_t row, const std::string& column) {
  if (field.empty()) throw parse_error(row, column, "missing value");
  if (field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw parse_error(row, column, "not a number: '" + std::string(field) + "'");
  }
  return v;
}

int parse_indicator(std::string_view field, std::size_t row, const std::string& column) {
  if (field.empty()) throw parse_error(row, column, "missing value");
  int v = -1;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || (v != 0 && v != 1)) {
    throw parse_error(row, column, "expected integer 0 or 1, got '" + std::string(field) + "'");
  }
  return v;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

ValidationReport validate(const DatasetDraft& draft) {
  ValidationReport rep;
  rep.declared_kind = draft.declared_kind;
  const auto k = draft.covariate_names.size();

  rep.columns.push_back({"y", 0});
  for (const auto& name : draft.covariate_names) rep.columns.push_back({name, 0});

  if (k == 0) {
    rep.violations.push_back({std::nullopt, "", "no_covariates", "at least one covariate is required"});
  }

  std::size_t n1 = 0;
  bool all_binary = !draft.rows.empty();
  for (std::size_t i = 0; i < draft.rows.size(); ++i) {
    const auto& r = draft.rows[i];
    if (r.x.size() != k) {
      rep.violations.push_back({i, "", "shape",
                                "row has " + std::to_string(r.x.size()) + " covariates, expected " +
                                    std::to_string(k)});
      continue;
    }
    if ((r.t != 0 && r.t != 1) || (r.d != 0 && r.d != 1)) {
      rep.violations.push_back({i, r.t != 0 && r.t != 1 ? "t" : "d", "indicator",
                                "treatment and source indicators must be 0 or 1"});
      continue;
    }
    if (r.d == 0 && r.t == 1) {
      rep.violations.push_back({i, "t", "source_treatment",
                                "external row (d=0) cannot be treated (t=1)"});
    }
    if (!std::isfinite(r.y)) {
      ++rep.columns[0].non_finite;
      rep.violations.push_back({i, "y", "non_finite", "outcome is not finite"});
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::isfinite(r.x[j])) {
        ++rep.columns[j + 1].non_finite;
        rep.violations.push_back({i, draft.covariate_names[j], "non_finite", "covariate is not finite"});
      }
    }
    if (!is_binary_value(r.y)) all_binary = false;
    if (r.d == 1) ++n1;
  }

  rep.detected_kind = all_binary ? OutcomeKind::binary : OutcomeKind::continuous;

  if (draft.declared_kind == OutcomeKind::binary) {
    for (std::size_t i = 0; i < draft.rows.size(); ++i) {
      const double y = draft.rows[i].y;
      if (std::isfinite(y) && !is_binary_value(y)) {
        rep.violations.push_back({i, "y", "kind_mismatch",
                                  "declared binary outcome but y = " + format_real(y)});
      }
    }
  }

  if (draft.rows.empty()) {
    rep.violations.push_back({std::nullopt, "", "empty", "dataset has no rows"});
  } else if (n1 == 0) {
    rep.violations.push_back({std::nullopt, "d", "no_trial", "dataset has no trial rows (d=1)"});
  } else if (n1 == draft.rows.size()) {
    rep.warnings.push_back("no external controls; only trial-based estimators available");
  }
  return rep;
}

ValidationReport validate(const CompositeDataset& ds) {
  DatasetDraft draft;
  draft.covariate_names = ds.covariate_names();
  draft.declared_kind = ds.outcome_kind();
  draft.rows.reserve(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) draft.rows.push_back(ds.row(i));
  return validate(draft);
}

CompositeDataset CompositeDataset::build(DatasetDraft draft) {
  const auto rep = validate(draft);
  if (!rep.usable()) {
    const auto& v = rep.violations.front();
    Error e(ErrorCode::InvariantViolation,
            (v.row ? "row " + std::to_string(*v.row) + ": " : std::string()) + v.message);
    e.row = v.row;
    if (!v.column.empty()) e.column = v.column;
    throw e;
  }

  CompositeDataset ds;
  const auto n = draft.rows.size();
  const auto k = draft.covariate_names.size();
  ds.y_.resize(static_cast<Eigen::Index>(n));
  ds.x_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  ds.t_.resize(n);
  ds.d_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = draft.rows[i];
    const auto ii = static_cast<Eigen::Index>(i);
    ds.y_(ii) = r.y;
    for (std::size_t j = 0; j < k; ++j) ds.x_(ii, static_cast<Eigen::Index>(j)) = r.x[j];
    ds.t_[i] = r.t;
    ds.d_[i] = r.d;
    if (r.d == 1) ++ds.n1_;
  }
  ds.kind_ = draft.declared_kind.value_or(rep.detected_kind);
  ds.names_ = std::move(draft.covariate_names);
  return ds;
}

Observation CompositeDataset::row(std::size_t i) const {
  const auto ii = static_cast<Eigen::Index>(i);
  Observation o;
  o.y = y_(ii);
  o.x.resize(k());
  for (std::size_t j = 0; j < k(); ++j) o.x[j] = x_(ii, static_cast<Eigen::Index>(j));
  o.t = t_[i];
  o.d = d_[i];
  return o;
}

CompositeDataset CompositeDataset::subset(std::span<const std::size_t> idx) const {
  DatasetDraft draft;
  draft.covariate_names = names_;
  draft.declared_kind = kind_;
  draft.rows.reserve(idx.size());
  for (auto i : idx) draft.rows.push_back(row(i));
  return build(std::move(draft));
}

CompositeDataset CompositeDataset::with_outcomes(const Eigen::VectorXd& y) const {
  if (y.size() != y_.size()) {
    throw Error(ErrorCode::InvariantViolation, "outcome vector length does not match dataset");
  }
  DatasetDraft draft;
  draft.covariate_names = names_;
  draft.rows.reserve(n());
  for (std::size_t i = 0; i < n(); ++i) {
    auto r = row(i);
    r.y = y(static_cast<Eigen::Index>(i));
    draft.rows.push_back(std::move(r));
  }
  return build(std::move(draft));
}

DatasetDraft parse_csv(std::istream& in, const Schema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty CSV input");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = split_fields(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) col.emplace(std::string(header[j]), j);

  auto require = [&](const std::string& name) -> std::size_t {
    auto it = col.find(name);
    if (it == col.end()) {
      Error e(ErrorCode::MissingColumn, "missing column '" + name + "'");
      e.column = name;
      throw e;
    }
    return it->second;
  };

  const auto iy = require(schema.y);
  const auto it = require(schema.t);
  const auto id = require(schema.d);

  DatasetDraft draft;
  std::vector<std::size_t> ix;
  if (schema.x.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j == iy || j == it || j == id) continue;
      ix.push_back(j);
      draft.covariate_names.emplace_back(header[j]);
    }
    if (ix.empty()) {
      Error e(ErrorCode::MissingColumn, "no covariate columns present");
      e.column = "x";
      throw e;
    }
  } else {
    for (const auto& name : schema.x) {
      ix.push_back(require(name));
      draft.covariate_names.push_back(name);
    }
  }

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != header.size()) {
      throw parse_error(row, "", "expected " + std::to_string(header.size()) + " fields, got " +
                                     std::to_string(f.size()));
    }
    Observation o;
    o.d = parse_indicator(f[id], row, schema.d);
    o.t = parse_indicator(f[it], row, schema.t);
    o.y = parse_real(f[iy], row, schema.y);
    o.x.reserve(ix.size());
    for (std::size_t j = 0; j < ix.size(); ++j) {
      o.x.push_back(parse_real(f[ix[j]], row, draft.covariate_names[j]));
    }
    draft.rows.push_back(std::move(o));
    ++row;
  }
  return draft;
}

CompositeDataset load_csv(const std::string& path, const Schema& schema,
                          std::optional<OutcomeKind> kind) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  auto draft = parse_csv(in, schema);
  draft.declared_kind = kind;
  return CompositeDataset::build(std::move(draft));
}

void write_csv(std::ostream& out, const CompositeDataset& ds, const Schema& schema) {
  out << schema.d << ',' << schema.t << ',' << schema.y;
  for (const auto& name : ds.covariate_names()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out << ds.d()[i] << ',' << ds.t()[i] << ',' << format_real(ds.y()(ii));
    for (std::size_t j = 0; j < ds.k(); ++j) {
      out << ',' << format_real(ds.x()(ii, static_cast<Eigen::Index>(j)));
    }
    out << '\n';
  }
}

namespace {

struct Moments {
  std::size_t count = 0;
  double y_sum = 0.0;
  std::vector<double> sum;
  std::vector<double> sumsq;
};

void finish(const Moments& m, std::vector<double>& means, std::vector<std::optional<double>>& sds) {
  const auto k = m.sum.size();
  means.assign(k, 0.0);
  sds.assign(k, std::nullopt);
  if (m.count == 0) return;
  const double c = static_cast<double>(m.count);
  for (std::size_t j = 0; j < k; ++j) {
    means[j] = m.sum[j] / c;
    if (m.count >= 2) {
      const double ss = std::max(0.0, m.sumsq[j] - c * means[j] * means[j]);
      sds[j] = std::sqrt(ss / (c - 1.0));
    }
  }
}

}  // namespace

DescriptiveStats summarize(const CompositeDataset& ds) {
  DescriptiveStats s;
  s.n = ds.n();
  s.n1 = ds.n1();
  s.n2 = ds.n2();
  s.q_hat = ds.q_hat();
  const auto k = ds.k();

  const std::pair<int, int> cells[] = {{1, 1}, {1, 0}, {0, 0}};
  Moments all;
  all.sum.assign(k, 0.0);
  all.sumsq.assign(k, 0.0);
  for (auto [d, t] : cells) {
    Moments m;
    m.sum.assign(k, 0.0);
    m.sumsq.assign(k, 0.0);
    for (std::size_t i = 0; i < ds.n(); ++i) {
      if (ds.d()[i] != d || ds.t()[i] != t) continue;
      const auto ii = static_cast<Eigen::Index>(i);
      ++m.count;
      m.y_sum += ds.y()(ii);
      for (std::size_t j = 0; j < k; ++j) {
        const double v = ds.x()(ii, static_cast<Eigen::Index>(j));
        m.sum[j] += v;
        m.sumsq[j] += v * v;
      }
    }
    CellStats c;
    c.d = d;
    c.t = t;
    c.count = m.count;
    if (m.count > 0) c.outcome_mean = m.y_sum / static_cast<double>(m.count);
    finish(m, c.covariate_means, c.covariate_sds);
    s.cells.push_back(std::move(c));

    all.count += m.count;
    for (std::size_t j = 0; j < k; ++j) {
      all.sum[j] += m.sum[j];
      all.sumsq[j] += m.sumsq[j];
    }
  }
  finish(all, s.covariate_means, s.covariate_sds);
  if (s.n1 > 0) {
    s.trial_treated_fraction =
        static_cast<double>(s.cells[0].count) / static_cast<double>(s.n1);
  }
  return s;
}

}  // namespace extctl
