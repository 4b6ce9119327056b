#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cotkit {

// Byte-level scheme shared by every pipeline stage:
//   ids 0-255   raw bytes
//   id  256     BOS
//   id  257     EOS
//   id  258     "<think>"
//   id  259     "</think>"
//   id  260     "Wait"
// Encoding replaces the exact special substrings with their ids; everything
// else is emitted byte by byte. decode(encode(s)) == s for any byte string.

namespace tok {
constexpr int BOS        = 256;
constexpr int EOS        = 257;
constexpr int THINK_OPEN  = 258;
constexpr int THINK_CLOSE = 259;
constexpr int WAIT        = 260;
// smallest vocab that can address every token the scheme can emit
constexpr int FULL_VOCAB  = 261;
} // namespace tok

std::vector<int> encode(std::string_view text);
std::string      decode(const std::vector<int> & tokens);
std::string      decode_token(int token);

} // namespace cotkit
