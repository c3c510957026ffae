#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace stigma::featurize {

/// Social-media tokenizer. Output tokens are lowercased. URLs become
/// `<url>`, @-mentions become `<user>`, common emoticons are kept whole,
/// runs of one repeated punctuation character ("!!!", "...") are kept as a
/// single token, other punctuation and whitespace separate words, and
/// apostrophes are kept inside words. Tokenizing the space-joined output
/// reproduces it.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace stigma::featurize
