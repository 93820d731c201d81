#pragma once

// Observational dataset (X, A, Y), fold assignment for cross-fitting, and CSV
// ingestion.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "retarget/detail/text.hpp"
#include "retarget/error.hpp"

namespace retarget {

using Index = Eigen::Index;

/// n observations of covariates X (n x d), a discrete action A in {0..m-1} and
/// a real outcome Y. In the binary case action 1 is the "treated" arm.
/// Immutable once constructed; the constructor enforces every invariant.
class Dataset {
 public:
  /// `num_actions` of 0 infers m as max(action) + 1.
  Dataset(Eigen::MatrixXd covariates, std::vector<int> actions,
          Eigen::VectorXd outcomes, int num_actions = 0)
      : covariates_(std::move(covariates)),
        actions_(std::move(actions)),
        outcomes_(std::move(outcomes)) {
    const auto n = static_cast<Index>(actions_.size());
    require(n >= 1, ErrorKind::kInvalidInput, "dataset must have at least one row");
    require(covariates_.rows() == n && outcomes_.size() == n, ErrorKind::kInvalidInput,
            "covariates, actions and outcomes must have matching length (got " +
                std::to_string(covariates_.rows()) + ", " + std::to_string(n) + ", " +
                std::to_string(outcomes_.size()) + ")");
    int max_label = -1;
    for (Index i = 0; i < n; ++i) {
      const int a = actions_[static_cast<std::size_t>(i)];
      require(a >= 0, ErrorKind::kInvalidInput,
              "row " + std::to_string(i) + ": negative action label " + std::to_string(a));
      max_label = std::max(max_label, a);
    }
    num_actions_ = num_actions > 0 ? num_actions : max_label + 1;
    require(num_actions_ >= 2, ErrorKind::kInvalidInput,
            "need at least two actions (m = " + std::to_string(num_actions_) + ")");
    require(max_label < num_actions_, ErrorKind::kInvalidInput,
            "action label " + std::to_string(max_label) + " is not below m = " +
                std::to_string(num_actions_));
    require(covariates_.allFinite(), ErrorKind::kInvalidInput, "non-finite covariate entry");
    require(outcomes_.allFinite(), ErrorKind::kInvalidInput, "non-finite outcome entry");
  }

  Index size() const { return static_cast<Index>(actions_.size()); }
  Index dim() const { return covariates_.cols(); }
  int num_actions() const { return num_actions_; }

  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const std::vector<int>& actions() const { return actions_; }
  const Eigen::VectorXd& outcomes() const { return outcomes_; }

  int action(Index i) const { return actions_[static_cast<std::size_t>(i)]; }
  double outcome(Index i) const { return outcomes_(i); }
  auto row(Index i) const { return covariates_.row(i); }

  Index count_action(int a) const {
    return static_cast<Index>(std::count(actions_.begin(), actions_.end(), a));
  }

  /// Rows in the given order; m is preserved even if an arm disappears.
  Dataset subset(std::span<const Index> rows) const {
    Eigen::MatrixXd x(static_cast<Index>(rows.size()), dim());
    std::vector<int> a(rows.size());
    Eigen::VectorXd y(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      x.row(static_cast<Index>(k)) = covariates_.row(rows[k]);
      a[k] = actions_[static_cast<std::size_t>(rows[k])];
      y(static_cast<Index>(k)) = outcomes_(rows[k]);
    }
    return Dataset(std::move(x), std::move(a), std::move(y), num_actions_);
  }

  friend bool operator==(const Dataset& lhs, const Dataset& rhs) {
    return lhs.num_actions_ == rhs.num_actions_ && lhs.actions_ == rhs.actions_ &&
           lhs.covariates_.rows() == rhs.covariates_.rows() &&
           lhs.covariates_.cols() == rhs.covariates_.cols() &&
           lhs.covariates_ == rhs.covariates_ && lhs.outcomes_ == rhs.outcomes_;
  }

 private:
  Eigen::MatrixXd covariates_;
  std::vector<int> actions_;
  Eigen::VectorXd outcomes_;
  int num_actions_ = 0;
};

// ---------------------------------------------------------------------------
// Folds

struct FoldAssignment {
  std::vector<int> fold_of;
  int num_folds = 0;

  Index size() const { return static_cast<Index>(fold_of.size()); }

  std::vector<Index> members(int fold) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == fold) out.push_back(static_cast<Index>(i));
    return out;
  }

  std::vector<Index> complement(int fold) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != fold) out.push_back(static_cast<Index>(i));
    return out;
  }

  friend bool operator==(const FoldAssignment&, const FoldAssignment&) = default;
};

namespace detail {

inline FoldAssignment round_robin(const std::vector<Index>& order, Index n, int num_folds) {
  FoldAssignment folds{std::vector<int>(static_cast<std::size_t>(n)), num_folds};
  for (std::size_t k = 0; k < order.size(); ++k)
    folds.fold_of[static_cast<std::size_t>(order[k])] = static_cast<int>(k % num_folds);
  return folds;
}

inline void check_fold_args(Index n, int num_folds) {
  require(num_folds >= 2, ErrorKind::kInvalidInput,
          "fold count must be at least 2 (got " + std::to_string(num_folds) + ")");
  require(num_folds <= n, ErrorKind::kInvalidInput,
          "fold count " + std::to_string(num_folds) + " exceeds sample size " +
              std::to_string(n));
}

}  // namespace detail

/// Seeded uniform shuffle followed by a round-robin split, so fold sizes
/// differ by at most one.
inline FoldAssignment make_folds(Index n, int num_folds, std::uint64_t seed) {
  detail::check_fold_args(n, num_folds);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return detail::round_robin(order, n, num_folds);
}

/// Like make_folds, but the round-robin runs over the shuffled rows grouped by
/// action, so every arm is spread evenly across folds.
inline FoldAssignment make_stratified_folds(const std::vector<int>& actions, int num_folds,
                                            std::uint64_t seed) {
  const auto n = static_cast<Index>(actions.size());
  detail::check_fold_args(n, num_folds);
  std::vector<Index> order(actions.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](Index l, Index r) {
    return actions[static_cast<std::size_t>(l)] < actions[static_cast<std::size_t>(r)];
  });
  return detail::round_robin(order, n, num_folds);
}

// ---------------------------------------------------------------------------
// CSV

struct DatasetSchema {
  /// Empty means every column named x1..xd, ordered by index.
  std::vector<std::string> covariate_columns;
  std::string action_column = "a";
  std::string outcome_column = "y";
  /// Overrides the inferred action count.
  std::optional<int> num_actions;
};

namespace detail {

inline std::optional<int> covariate_index(std::string_view name) {
  if (name.size() < 2 || name[0] != 'x') return std::nullopt;
  const auto k = parse_integer(name.substr(1));
  if (!k || *k < 1) return std::nullopt;
  return static_cast<int>(*k);
}

}  // namespace detail

inline Dataset parse_dataset(std::string_view text, const DatasetSchema& schema = {},
                             const std::string& source = "<input>") {
  const auto all_lines = detail::lines(text);
  std::size_t header_line = 0;
  while (header_line < all_lines.size() && detail::trim(all_lines[header_line]).empty())
    ++header_line;
  require(header_line < all_lines.size(), ErrorKind::kParse, source + ": empty file");

  const auto header = detail::split(all_lines[header_line], ',');
  std::map<std::string, std::size_t, std::less<>> column;
  for (std::size_t c = 0; c < header.size(); ++c) column.emplace(std::string(header[c]), c);

  auto find_column = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) fail(ErrorKind::kParse, source + ": missing column '" + name + "'");
    return it->second;
  };

  std::vector<std::size_t> x_cols;
  std::vector<std::string> x_names;
  if (schema.covariate_columns.empty()) {
    std::vector<std::pair<int, std::size_t>> found;
    for (std::size_t c = 0; c < header.size(); ++c)
      if (auto k = detail::covariate_index(header[c])) found.emplace_back(*k, c);
    std::sort(found.begin(), found.end());
    for (std::size_t k = 0; k < found.size(); ++k) {
      if (found[k].first != static_cast<int>(k) + 1)
        fail(ErrorKind::kParse, source + ": missing column 'x" + std::to_string(k + 1) + "'");
      x_cols.push_back(found[k].second);
      x_names.push_back(std::string(header[found[k].second]));
    }
  } else {
    for (const auto& name : schema.covariate_columns) {
      x_cols.push_back(find_column(name));
      x_names.push_back(name);
    }
  }
  const auto a_col = find_column(schema.action_column);
  const auto y_col = find_column(schema.outcome_column);

  std::vector<std::vector<double>> xs;
  std::vector<int> actions;
  std::vector<double> ys;
  for (std::size_t li = header_line + 1; li < all_lines.size(); ++li) {
    if (detail::trim(all_lines[li]).empty()) continue;
    const auto cells = detail::split(all_lines[li], ',');
    const auto where = [&](const std::string& name) {
      return source + ": line " + std::to_string(li + 1) + " (data row " +
             std::to_string(actions.size() + 1) + "), column '" + name + "'";
    };
    if (cells.size() != header.size())
      fail(ErrorKind::kParse, source + ": line " + std::to_string(li + 1) + " has " +
                                  std::to_string(cells.size()) + " fields, expected " +
                                  std::to_string(header.size()));
    std::vector<double> x(x_cols.size());
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      const auto v = detail::parse_double(cells[x_cols[j]]);
      if (!v) fail(ErrorKind::kParse, where(x_names[j]) + ": non-numeric value '" +
                                          std::string(cells[x_cols[j]]) + "'");
      if (!std::isfinite(*v))
        fail(ErrorKind::kInvalidInput, where(x_names[j]) + ": non-finite value");
      x[j] = *v;
    }
    const auto a = detail::parse_integer(cells[a_col]);
    if (!a) fail(ErrorKind::kParse, where(schema.action_column) + ": action is not an integer '" +
                                        std::string(cells[a_col]) + "'");
    if (*a < 0)
      fail(ErrorKind::kInvalidInput,
           where(schema.action_column) + ": negative action label " + std::to_string(*a));
    if (schema.num_actions && *a >= *schema.num_actions)
      fail(ErrorKind::kInvalidInput, where(schema.action_column) + ": action label " +
                                         std::to_string(*a) + " is not below m = " +
                                         std::to_string(*schema.num_actions));
    const auto y = detail::parse_double(cells[y_col]);
    if (!y) fail(ErrorKind::kParse, where(schema.outcome_column) + ": non-numeric value '" +
                                        std::string(cells[y_col]) + "'");
    if (!std::isfinite(*y))
      fail(ErrorKind::kInvalidInput, where(schema.outcome_column) + ": non-finite value");
    xs.push_back(std::move(x));
    actions.push_back(static_cast<int>(*a));
    ys.push_back(*y);
  }
  require(!actions.empty(), ErrorKind::kParse, source + ": no data rows");

  const auto n = static_cast<Index>(actions.size());
  const auto d = static_cast<Index>(x_cols.size());
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) x(i, j) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    y(i) = ys[static_cast<std::size_t>(i)];
  }
  try {
    return Dataset(std::move(x), std::move(actions), std::move(y), schema.num_actions.value_or(0));
  } catch (const Error& e) {
    throw e.annotated(source);
  }
}

inline Dataset load_dataset(const std::string& path, const DatasetSchema& schema = {}) {
  return parse_dataset(detail::read_file(path), schema, path);
}

/// CSV with columns x1..xd,a,y. Numbers use the shortest round-trip form, so
/// parse_dataset(format_dataset(D)) == D bit for bit.
inline std::string format_dataset(const Dataset& data) {
  std::string out;
  for (Index j = 0; j < data.dim(); ++j) out += "x" + std::to_string(j + 1) + ",";
  out += "a,y\n";
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) out += detail::format_exact(data.covariates()(i, j)) + ",";
    out += std::to_string(data.action(i)) + "," + detail::format_exact(data.outcome(i)) + "\n";
  }
  return out;
}

inline void write_dataset(const std::string& path, const Dataset& data) {
  detail::write_file(path, format_dataset(data));
}

}  // namespace retarget
