#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace irtbias {

enum class Subscale { economic, social };

std::string_view to_string(Subscale s);
Subscale parse_subscale(std::string_view s);

struct Item {
  int id = 0;
  std::string text;
  Subscale subscale = Subscale::social;
  bool reverse_coded = false;
  std::vector<std::string> tags;

  bool operator==(const Item&) const = default;
};

// Five observable outcomes plus MISSING for absent records.
enum class Category : std::uint8_t { SA, A, D, SD, PNA, MISSING };

std::string_view to_string(Category c);
// Accepts the short labels SA/A/D/SD/PNA (case-insensitive). Throws InvalidCategory.
Category parse_category(std::string_view label);

// SA=3, A=2, D=1, SD=0; nullopt for PNA and MISSING.
std::optional<int> ordinal_code(Category c);
Category category_from_code(int code);

// Immutable, validated item inventory.
class ItemBank {
 public:
  // Validates ids (unique, contiguous 1..N), non-empty text and recode ids in
  // range, then sets reverse_coded from recode_ids. Throws ValidationError.
  ItemBank(std::vector<Item> items, std::string version, std::set<int> recode_ids);

  const std::vector<Item>& items() const noexcept { return items_; }
  const std::string& version() const noexcept { return version_; }
  const std::set<int>& recode_ids() const noexcept { return recode_ids_; }
  std::size_t size() const noexcept { return items_.size(); }

  bool contains(int item_id) const noexcept { return item_id >= 1 && item_id <= static_cast<int>(items_.size()); }
  // Throws UnknownItem.
  const Item& item(int item_id) const;

  bool operator==(const ItemBank&) const = default;

 private:
  std::vector<Item> items_;
  std::string version_;
  std::set<int> recode_ids_;
};

inline constexpr std::string_view kBuiltinBankVersion = "irtbias-builtin-105/1";

ItemBank builtin_item_bank();

// "builtin" selects the embedded bank; anything else is a JSON file path.
ItemBank load_item_bank(const std::string& source);
ItemBank item_bank_from_json(const nlohmann::json& j);
nlohmann::json item_bank_to_json(const ItemBank& bank);

// Reverses the answered scale for reverse-coded items; PNA and non-recoded
// items pass through. Throws InvalidCategory on MISSING.
Category recode_category(const Item& item, Category cat);

}  // namespace irtbias
