#pragma once

// Composite trial + external-control dataset.
//
// Each row is (y, x, t, d): outcome, pre-treatment covariates, treatment
// indicator and data-source indicator (d = 1 trial, d = 0 external). External
// rows are controls by construction, so d = 0 forces t = 0.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace extctl {

enum class OutcomeKind { binary, continuous };

std::string to_string(OutcomeKind kind);
OutcomeKind outcome_kind_from_string(const std::string& s);

struct Observation {
  double y = 0.0;
  std::vector<double> x;
  int t = 0;
  int d = 1;
};

// Column-name map for CSV input. An empty covariate list means "every column
// that is not y, t or d, in file order".
struct Schema {
  std::string y = "y";
  std::string t = "t";
  std::string d = "d";
  std::vector<std::string> x;
};

// Unvalidated rows, as read from a file or assembled by a caller.
struct DatasetDraft {
  std::vector<Observation> rows;
  std::vector<std::string> covariate_names;
  std::optional<OutcomeKind> declared_kind;
};

struct Violation {
  std::optional<std::size_t> row;
  std::string column;
  std::string kind;  // "source_treatment", "non_finite", "kind_mismatch", ...
  std::string message;
};

struct ColumnCheck {
  std::string column;
  std::size_t non_finite = 0;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<std::string> warnings;
  std::vector<ColumnCheck> columns;
  OutcomeKind detected_kind = OutcomeKind::continuous;
  std::optional<OutcomeKind> declared_kind;

  bool usable() const { return violations.empty(); }
};

ValidationReport validate(const DatasetDraft& draft);

class CompositeDataset {
 public:
  // Validates and freezes the draft. Throws Error(InvariantViolation) on the
  // first violation found.
  static CompositeDataset build(DatasetDraft draft);

  std::size_t n() const { return static_cast<std::size_t>(y_.size()); }
  std::size_t n1() const { return n1_; }
  std::size_t n2() const { return n() - n1_; }
  double q_hat() const { return static_cast<double>(n1_) / static_cast<double>(n()); }
  std::size_t k() const { return static_cast<std::size_t>(x_.cols()); }

  OutcomeKind outcome_kind() const { return kind_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::MatrixXd& x() const { return x_; }
  const std::vector<int>& t() const { return t_; }
  const std::vector<int>& d() const { return d_; }

  Observation row(std::size_t i) const;

  // Rows picked by index (duplicates allowed); keeps names and outcome kind.
  CompositeDataset subset(std::span<const std::size_t> idx) const;

  // Same rows with y replaced (used by simulations that perturb outcomes).
  CompositeDataset with_outcomes(const Eigen::VectorXd& y) const;

 private:
  CompositeDataset() = default;

  Eigen::VectorXd y_;
  Eigen::MatrixXd x_;
  std::vector<int> t_;
  std::vector<int> d_;
  std::size_t n1_ = 0;
  OutcomeKind kind_ = OutcomeKind::continuous;
  std::vector<std::string> names_;
};

ValidationReport validate(const CompositeDataset& ds);

DatasetDraft parse_csv(std::istream& in, const Schema& schema);
CompositeDataset load_csv(const std::string& path, const Schema& schema,
                          std::optional<OutcomeKind> kind = std::nullopt);

// Columns d,t,y followed by covariates; numbers in shortest round-trip form.
void write_csv(std::ostream& out, const CompositeDataset& ds, const Schema& schema = {});

struct CellStats {
  int d = 1;
  int t = 0;
  std::size_t count = 0;
  std::optional<double> outcome_mean;
  std::vector<double> covariate_means;
  std::vector<std::optional<double>> covariate_sds;  // absent when count < 2
};

struct DescriptiveStats {
  std::size_t n = 0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  double q_hat = 0.0;
  std::optional<double> trial_treated_fraction;
  std::vector<CellStats> cells;  // (1,1), (1,0), (0,0)
  std::vector<double> covariate_means;
  std::vector<std::optional<double>> covariate_sds;
};

DescriptiveStats summarize(const CompositeDataset& ds);

}  // namespace extctl
