#include "tsflow/prompts.hpp"

#include "tsflow/default_prompts.hpp"
#include "tsflow/error.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace tsflow {

std::string_view to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::ModelSelect:
      return "model_select";
    case Stage::Refinement:
      return "refinement";
    case Stage::FineTune:
      return "fine_tune";
  }
  return "unknown";
}

const std::string& PromptSet::for_stage(Stage stage) const {
  switch (stage) {
    case Stage::ModelSelect:
      return model_select;
    case Stage::Refinement:
      return refinement;
    case Stage::FineTune:
      return fine_tune;
  }
  return model_select;
}

PromptSet PromptSet::defaults() {
  return {std::string(prompts::k_model_select_prompt), std::string(prompts::k_refinement_prompt),
          std::string(prompts::k_fine_tune_prompt)};
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  auto read = [&](const char* name) {
    const auto path = dir / name;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, "cannot read prompt template " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  };
  return {read("model_select.txt"), read("refinement.txt"), read("fine_tune.txt")};
}

std::vector<std::string> placeholders(std::string_view tpl) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::size_t pos = 0;
  while ((pos = tpl.find("{{", pos)) != std::string_view::npos) {
    const auto end = tpl.find("}}", pos + 2);
    if (end == std::string_view::npos) break;
    std::string name(tpl.substr(pos + 2, end - pos - 2));
    if (seen.insert(name).second) out.push_back(name);
    pos = end + 2;
  }
  return out;
}

std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& values) {
  const auto names = placeholders(tpl);
  for (const auto& [key, _] : values) {
    if (std::find(names.begin(), names.end(), key) == names.end()) {
      throw Error(ErrorCode::InvalidArgument, "template has no placeholder {{" + key + "}}");
    }
  }
  std::string out;
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const auto open = tpl.find("{{", pos);
    const auto close = open == std::string_view::npos ? open : tpl.find("}}", open + 2);
    if (open == std::string_view::npos || close == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    out.append(tpl.substr(pos, open - pos));
    const std::string name(tpl.substr(open + 2, close - open - 2));
    auto it = values.find(name);
    if (it == values.end()) throw Error(ErrorCode::InvalidArgument, "no value for placeholder {{" + name + "}}");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

}  // namespace tsflow
