#include "tsflow/retrieval.hpp"

#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

namespace tsflow {

namespace {

SparseVector normalized(std::map<std::size_t, double> weights) {
  double norm = 0.0;
  for (const auto& [_, w] : weights) norm += w * w;
  norm = std::sqrt(norm);
  SparseVector out;
  if (norm == 0.0) return out;
  out.reserve(weights.size());
  for (const auto& [i, w] : weights) out.emplace_back(i, w / norm);
  return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (current.size() >= 2) out.push_back(current);
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

CaseIndex::CaseIndex(std::map<std::string, std::size_t> vocabulary, std::vector<double> idf,
                     std::vector<SparseVector> vectors, std::vector<std::string> case_ids)
    : vocabulary_(std::move(vocabulary)),
      idf_(std::move(idf)),
      vectors_(std::move(vectors)),
      case_ids_(std::move(case_ids)) {}

SparseVector CaseIndex::embed(std::string_view text) const {
  std::map<std::size_t, double> weights;
  for (const auto& tok : tokenize(text)) {
    auto it = vocabulary_.find(tok);
    if (it != vocabulary_.end()) weights[it->second] += 1.0;
  }
  for (auto& [i, w] : weights) w *= idf_[i];
  return normalized(std::move(weights));
}

CaseIndex index_cases(const BankSet& banks, TaskKind kind_filter) {
  std::vector<const CaseRecord*> docs;
  for (const auto& c : banks.cases) {
    if (c.task_kind == kind_filter) docs.push_back(&c);
  }
  if (docs.empty()) {
    throw Error(ErrorCode::EmptyBank, "no " + std::string(to_string(kind_filter)) + " cases in the case bank");
  }

  std::vector<std::vector<std::string>> tokens;
  std::set<std::string> terms;
  for (const auto* d : docs) {
    tokens.push_back(tokenize(d->description));
    terms.insert(tokens.back().begin(), tokens.back().end());
  }
  std::map<std::string, std::size_t> vocabulary;
  for (const auto& t : terms) vocabulary.emplace(t, vocabulary.size());

  std::vector<double> df(vocabulary.size(), 0.0);
  for (const auto& toks : tokens) {
    std::set<std::string> unique(toks.begin(), toks.end());
    for (const auto& t : unique) df[vocabulary.at(t)] += 1.0;
  }
  const double n = static_cast<double>(docs.size());
  std::vector<double> idf(vocabulary.size());
  for (std::size_t i = 0; i < idf.size(); ++i) idf[i] = std::log((1.0 + n) / (1.0 + df[i])) + 1.0;

  std::vector<SparseVector> vectors;
  std::vector<std::string> ids;
  for (std::size_t k = 0; k < docs.size(); ++k) {
    std::map<std::size_t, double> weights;
    for (const auto& t : tokens[k]) weights[vocabulary.at(t)] += 1.0;
    for (auto& [i, w] : weights) w *= idf[i];
    vectors.push_back(normalized(std::move(weights)));
    ids.push_back(docs[k]->id);
  }
  return CaseIndex(std::move(vocabulary), std::move(idf), std::move(vectors), std::move(ids));
}

double cosine(const SparseVector& a, const SparseVector& b) {
  double dot = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  // Both sides are unit vectors; clamp rounding noise into [0, 1].
  return std::clamp(dot, 0.0, 1.0);
}

RetrievalResult retrieve(const CaseIndex& index, std::string_view query, std::size_t k_cases) {
  if (k_cases < 1) throw Error(ErrorCode::InvalidArgument, "k_cases must be >= 1");
  const SparseVector q = index.embed(query);
  RetrievalResult result;
  for (std::size_t i = 0; i < index.case_ids().size(); ++i) {
    result.ranked.push_back({index.case_ids()[i], cosine(q, index.vectors()[i])});
  }
  std::sort(result.ranked.begin(), result.ranked.end(), [](const RankedCase& a, const RankedCase& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.case_id < b.case_id;
  });
  if (result.ranked.size() > k_cases) result.ranked.resize(k_cases);
  return result;
}

RetrievalResult top_k_models(RetrievalResult result, const BankSet& banks, std::size_t k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  std::map<std::string, ModelVote> votes;
  for (const auto& rc : result.ranked) {
    const CaseRecord* c = banks.find_case(rc.case_id);
    if (!c || !banks.find_model(c->recommended_model)) continue;
    auto& v = votes[c->recommended_model];
    v.model_id = c->recommended_model;
    v.score += rc.similarity;
    v.contributing_cases.push_back(rc.case_id);
  }
  if (votes.empty()) throw Error(ErrorCode::NoCandidates, "no retrieved case recommends a known model");

  std::vector<ModelVote> ranked;
  for (auto& [_, v] : votes) {
    std::sort(v.contributing_cases.begin(), v.contributing_cases.end());
    ranked.push_back(std::move(v));
  }
  std::sort(ranked.begin(), ranked.end(), [](const ModelVote& a, const ModelVote& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.model_id < b.model_id;
  });
  result.shortfall = ranked.size() < k;
  if (ranked.size() > k) ranked.resize(k);

  std::ostringstream os;
  for (const auto& v : ranked) {
    os << v.model_id << " scored " << format_double(v.score) << " from cases";
    for (const auto& c : v.contributing_cases) os << " " << c;
    os << ". ";
  }
  if (result.shortfall) os << "Only " << ranked.size() << " distinct model(s) available for k=" << k << ".";
  result.rationale = os.str();
  if (!result.rationale.empty() && result.rationale.back() == ' ') result.rationale.pop_back();
  result.model_votes = std::move(ranked);
  return result;
}

}  // namespace tsflow
