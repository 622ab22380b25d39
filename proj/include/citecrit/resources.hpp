#pragma once

#include <map>
#include <string>
#include <string_view>

namespace citecrit::resources {

/// Lexicon files compiled into the library, keyed by file name
/// (for example "easy_words.txt" or "sentiment.csv").
const std::map<std::string_view, std::string_view>& builtin_files();

/// Contents of `name`: read from `override_dir` when that directory holds a
/// file of that name, otherwise the compiled-in copy. Throws IoError when
/// neither exists.
std::string load(std::string_view name, const std::string& override_dir = {});

}  // namespace citecrit::resources
