#include "cotkit/tokenizer.hpp"

#include "cotkit/common.hpp"

namespace cotkit {

namespace {

struct Special {
    std::string_view text;
    int              id;
};

// "</think>" could otherwise be split by a match of a shorter pattern, so
// patterns are tried longest first at each position.
constexpr Special k_specials[] = {
    { "</think>", tok::THINK_CLOSE },
    { "<think>",  tok::THINK_OPEN  },
    { "Wait",     tok::WAIT        },
};

} // namespace

std::vector<int> encode(std::string_view text) {
    std::vector<int> out;
    out.reserve(text.size());
    size_t i = 0;
    while (i < text.size()) {
        bool matched = false;
        for (const Special & sp : k_specials) {
            if (text.compare(i, sp.text.size(), sp.text) == 0) {
                out.push_back(sp.id);
                i += sp.text.size();
                matched = true;
                break;
            }
        }
        if (!matched) {
            out.push_back(int(static_cast<unsigned char>(text[i])));
            ++i;
        }
    }
    return out;
}

std::string decode_token(int token) {
    if (token >= 0 && token < 256) {
        return std::string(1, char(static_cast<unsigned char>(token)));
    }
    switch (token) {
        case tok::BOS:
        case tok::EOS:
            return "";
        case tok::THINK_OPEN:
            return "<think>";
        case tok::THINK_CLOSE:
            return "</think>";
        case tok::WAIT:
            return "Wait";
        default:
            throw error("decode: token id " + std::to_string(token) + " outside the byte-level scheme");
    }
}

std::string decode(const std::vector<int> & tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens) {
        out += decode_token(t);
    }
    return out;
}

} // namespace cotkit
