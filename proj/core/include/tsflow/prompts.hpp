#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tsflow {

enum class Stage { ModelSelect, Refinement, FineTune };

std::string_view to_string(Stage stage) noexcept;

/// One template per stage, `{{placeholder}}` syntax.
struct PromptSet {
  std::string model_select;
  std::string refinement;
  std::string fine_tune;

  const std::string& for_stage(Stage stage) const;

  /// The templates compiled into the library from prompts/.
  static PromptSet defaults();
  /// Reads model_select.txt, refinement.txt and fine_tune.txt from `dir`.
  static PromptSet load(const std::filesystem::path& dir);
};

/// Names of the placeholders in order of first appearance.
std::vector<std::string> placeholders(std::string_view tpl);

/// Substitutes every placeholder. Throws InvalidArgument when a placeholder has
/// no value or a value has no placeholder.
std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& values);

}  // namespace tsflow
