#pragma once

#include "tsflow/banks.hpp"

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tsflow {

/// Lowercase, split on non-alphanumerics, drop tokens shorter than 2 characters.
std::vector<std::string> tokenize(std::string_view text);

/// Sparse unit vector: sorted (term index, weight) pairs.
using SparseVector = std::vector<std::pair<std::size_t, double>>;

/// tf-idf index over the case descriptions of one task kind.
class CaseIndex {
 public:
  CaseIndex(std::map<std::string, std::size_t> vocabulary, std::vector<double> idf,
            std::vector<SparseVector> vectors, std::vector<std::string> case_ids);

  const std::map<std::string, std::size_t>& vocabulary() const noexcept { return vocabulary_; }
  const std::vector<double>& idf() const noexcept { return idf_; }
  const std::vector<SparseVector>& vectors() const noexcept { return vectors_; }
  const std::vector<std::string>& case_ids() const noexcept { return case_ids_; }

  /// L2-normalized tf-idf vector of `text` under this index's idf; out-of-vocabulary tokens drop.
  SparseVector embed(std::string_view text) const;

 private:
  std::map<std::string, std::size_t> vocabulary_;
  std::vector<double> idf_;
  std::vector<SparseVector> vectors_;
  std::vector<std::string> case_ids_;
};

/// idf = ln((1 + N) / (1 + df)) + 1, tf = raw count, vectors L2-normalized.
CaseIndex index_cases(const BankSet& banks, TaskKind kind_filter);

struct RankedCase {
  std::string case_id;
  double similarity = 0.0;
};

struct ModelVote {
  std::string model_id;
  double score = 0.0;
  std::vector<std::string> contributing_cases;
};

struct RetrievalResult {
  std::vector<RankedCase> ranked;
  std::vector<ModelVote> model_votes;
  std::string rationale;
  /// Set when fewer than k distinct models were available.
  bool shortfall = false;
};

double cosine(const SparseVector& a, const SparseVector& b);

/// Top `k_cases` by (similarity desc, case id asc).
RetrievalResult retrieve(const CaseIndex& index, std::string_view query, std::size_t k_cases);

/// Sums similarities per recommended model and keeps the top k by (score desc, id asc).
/// Throws NoCandidates when no ranked case resolves to a model.
RetrievalResult top_k_models(RetrievalResult result, const BankSet& banks, std::size_t k);

}  // namespace tsflow
