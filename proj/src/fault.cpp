#include "hafuse/fault.hpp"

#include <cstdlib>
#include <set>
#include <sstream>
#include <string>

namespace hafuse::fault {

static const std::set<std::string>& active() {
    static const std::set<std::string> names = [] {
        std::set<std::string> out;
        if (const char* env = std::getenv("HAFUSE_FAULT")) {
            std::stringstream ss(env);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (!item.empty()) out.insert(item);
            }
        }
        return out;
    }();
    return names;
}

bool enabled(const char* name) { return active().count(name) != 0; }

} // namespace hafuse::fault
