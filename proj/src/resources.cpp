#include "citecrit/resources.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "citecrit/error.hpp"

namespace citecrit::resources {

std::string load(std::string_view name, const std::string& override_dir) {
    if (!override_dir.empty()) {
        const std::filesystem::path path = std::filesystem::path(override_dir) / std::string(name);
        if (std::filesystem::exists(path)) {
            std::ifstream in(path, std::ios::binary);
            if (!in) throw IoError("cannot open " + path.string());
            std::ostringstream ss;
            ss << in.rdbuf();
            return ss.str();
        }
    }
    const auto& files = builtin_files();
    const auto it = files.find(name);
    if (it == files.end()) throw IoError("no built-in resource named " + std::string(name));
    return std::string(it->second);
}

}  // namespace citecrit::resources
