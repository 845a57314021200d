#pragma once

#include "tsflow/banks.hpp"
#include "tsflow/llm_gateway.hpp"
#include "tsflow/planner.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>

namespace tsflow {

/// SplitMix64 finalizer; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

enum class ModelOrder { Votes, ReverseVotes, Lexical, ReverseLexical };

struct ScriptedOptions {
  ModelOrder model_order = ModelOrder::Votes;
  /// When false, repair requests return the failing directives unchanged.
  bool repair = true;
};

/// Rule table. Refinement walks the applicable tips in id order, adding each
/// tip's directive (parameters scaled on later passes); fine-tuning is a
/// coordinate pattern search that keeps a direction while it is accepted;
/// repair drops the directive named in the error, else the newest one.
class ScriptedBackend : public PlannerBackend {
 public:
  ScriptedBackend(const BankSet& banks, ScriptedOptions options = {});

  std::string id() const override { return "scripted"; }
  std::string respond(const DecisionContext& ctx, std::span<const std::string> feedback) override;
  std::unique_ptr<PlannerBackend> fork(std::uint64_t stream) const override;

 private:
  std::string model_select(const DecisionContext& ctx) const;
  std::string refinement(const DecisionContext& ctx);
  std::string repair(const DecisionContext& ctx) const;
  std::string fine_tune(const DecisionContext& ctx);

  const BankSet& banks_;
  ScriptedOptions options_;
  std::size_t tip_cursor_ = 0;
  std::size_t param_index_ = 0;
  int direction_ = 1;
  bool direction_progressed_ = false;
  std::optional<std::pair<std::string, HyperValue>> last_move_;
  /// Moves rejected since the last kept one, as (name, displayed value).
  std::set<std::pair<std::string, std::string>> rejected_moves_;
};

/// Uniform over valid payloads, seeded. fork(stream) gives an independent substream.
class RandomBackend : public PlannerBackend {
 public:
  RandomBackend(const BankSet& banks, std::uint64_t seed, std::uint64_t stream = 0);

  std::string id() const override { return "random"; }
  std::string respond(const DecisionContext& ctx, std::span<const std::string> feedback) override;
  std::unique_ptr<PlannerBackend> fork(std::uint64_t stream) const override;

 private:
  const BankSet& banks_;
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 rng_;
  std::uint64_t draws_ = 0;
};

/// Sends the rendered context through an LLM gateway (live, record, replay or mock).
class LlmBackend : public PlannerBackend {
 public:
  LlmBackend(std::shared_ptr<LlmGateway> gateway, ChatParams params = {});

  std::string id() const override;
  std::string respond(const DecisionContext& ctx, std::span<const std::string> feedback) override;
  std::unique_ptr<PlannerBackend> fork(std::uint64_t stream) const override;

  /// The exact request respond() would send.
  ChatRequest make_request(const DecisionContext& ctx, std::span<const std::string> feedback) const;

 private:
  std::shared_ptr<LlmGateway> gateway_;
  ChatParams params_;
};

}  // namespace tsflow
