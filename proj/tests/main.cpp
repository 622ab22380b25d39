#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <spdlog/spdlog.h>

int main(int argc, char** argv) {
    // Several cases exercise warning paths on purpose; keep the output readable.
    spdlog::set_level(spdlog::level::err);
    doctest::Context context(argc, argv);
    return context.run();
}
