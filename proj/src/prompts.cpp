#include "prefjudge/prompts.hpp"

namespace prefjudge::prompts {

std::string fill(std::string_view tmpl, std::initializer_list<Slot> slots) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        bool replaced = false;
        for (const auto& [key, value] : slots) {
            if (!key.empty() && tmpl.compare(i, key.size(), key) == 0) {
                out.append(value);
                i += key.size();
                replaced = true;
                break;
            }
        }
        if (!replaced) out.push_back(tmpl[i++]);
    }
    return out;
}

}  // namespace prefjudge::prompts
