#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace irtbias::csv {

using Row = std::vector<std::string>;

// RFC 4180 reader: quoted fields may contain commas, doubled quotes and
// newlines. A trailing CR before LF is dropped. Blank lines are skipped.
std::vector<Row> parse(std::string_view text);

// Quotes the field only when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

std::string join(const Row& row);

}  // namespace irtbias::csv
