#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace bayesrisk {

// Newline-separated household object category list (338 entries).
std::string_view bundled_categories_text();
std::vector<std::string> bundled_categories();

// Pairwise rating prompt. Placeholders: {{hazards}} and {{pairs}}.
std::string_view bundled_prompt_template();

}  // namespace bayesrisk
