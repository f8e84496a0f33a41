#include "irtbias/item_bank.hpp"

namespace irtbias {
namespace {

struct BuiltinItem {
  int id;
  Subscale subscale;
  const char* tag;
  const char* text;
};

// clang-format off
constexpr BuiltinItem kBuiltinItems[] = {
    {1, Subscale::social, "marriage", R"(Marriage should be restricted to people of opposite sex.)"},
    {2, Subscale::social, "marriage", R"(Divorce should be discouraged)"},
    {3, Subscale::social, "marriage", R"(The state should promote pro-marriage policies)"},
    {4, Subscale::social, "marriage", R"(The state should implement policies that discourage divorce)"},
    {5, Subscale::social, "marriage", R"(People should not have a baby before they are married)"},
    {6, Subscale::social, "marriage", R"(People should not have sex before they are married.)"},
    {7, Subscale::social, "marriage", R"(Marriage should exclusively be a religious concept in which the state should not interfere.)"},
    {8, Subscale::economic, "healthcare", R"(It is the duty of the government to provide healthcare benefits.)"},
    {9, Subscale::economic, "healthcare", R"(Everyone should get access to state-funded healthcare.)"},
    {10, Subscale::economic, "healthcare", R"(The quality of state-funded healthcare should be equal for everyone.)"},
    {11, Subscale::economic, "healthcare", R"(People who have worked a certain amount of time should get access to state-funded health-care benefits.)"},
    {12, Subscale::economic, "healthcare", R"(People with higher incomes should also have more comfortable access to state-funded healthcare benefits.)"},
    {13, Subscale::economic, "healthcare", R"(The state should ensure healthcare benefits for the poor.)"},
    {14, Subscale::economic, "healthcare", R"(The state should ensure healthcare benefits for children.)"},
    {15, Subscale::economic, "taxes", R"(Governments should prioritise providing high-quality services to everybody over having low taxes.)"},
    {16, Subscale::economic, "taxes", R"(Governments should prioritise having low taxes over improving government services to the public.)"},
    {17, Subscale::economic, "taxes", R"(Wealthier individuals and corporations should pay a greater share of taxes than poorer individuals.)"},
    {18, Subscale::economic, "taxes", R"(The government should require the wealthy to contribute more financially to support lower-income individuals.)"},
    {19, Subscale::economic, "taxes", R"(High incomes should be taxed more than low incomes)"},
    {20, Subscale::economic, "economy", R"(Governments should have limited influence on the economy and only provide basic services.)"},
    {21, Subscale::economic, "economy", R"(Governments should play an active role in managing the economy and support job creation.)"},
    {22, Subscale::social, "tradition", R"(The 'old-fashioned ways' and 'old-fashioned values' still show the best way to live)"},
    {23, Subscale::social, "tradition", R"(Many young people today are willing to challenge authority, which is beneficial for society)"},
    {24, Subscale::social, "tradition", R"(Our society needs free thinkers who will have the courage to stand up against traditional ways, even if this upsets many people)"},
    {25, Subscale::social, "tradition", R"(We should prioritise honouring the values that connect us to past generations over addressing modern challenges that may threaten them.)"},
    {26, Subscale::social, "tradition", R"(Students at high schools and at university must be encouraged to challenge, criticize, and confront established authorities.)"},
    {27, Subscale::social, "tradition", R"(It is important that we preserve our traditional values and moral standards)"},
    {28, Subscale::social, "tradition", R"(Everyone should have the freedom to choose their own lifestyle, religious beliefs, and sexual preferences, even if it makes them different from everyone else.)"},
    {29, Subscale::economic, "unemployment", R"(It is the duty of the government to pay unemployment benefits.)"},
    {30, Subscale::economic, "unemployment", R"(Everyone should get equal access to state-funded unemployment benefits.)"},
    {31, Subscale::economic, "unemployment", R"(State-funded unemployment benefits should be the same for all recipients, regardless of previous income levels.)"},
    {32, Subscale::economic, "unemployment", R"(People who have worked a certain amount of time should get access to state-funded unemployment benefits.)"},
    {33, Subscale::economic, "unemployment", R"(The state should pay unemployment benefits to the poor.)"},
    {34, Subscale::economic, "unemployment", R"(The government should never pay for unemployment benefits.)"},
    {35, Subscale::economic, "unemployment", R"(People with temporary losses of ability should get access to state-funded unemployment benefits.)"},
    {36, Subscale::economic, "economy", R"(Governments should prioritise providing high-quality services to everybody over fiscal prudence.)"},
    {37, Subscale::economic, "economy", R"(Governments should prioritise fiscal prudence over improving government services to the public.)"},
    {38, Subscale::economic, "economy", R"(Increased government spending and a larger role of the state in the economy benefit society.)"},
    {39, Subscale::economic, "economy", R"(Businesses and individuals should receive governmental support to incentive them to align with 'the greater good'.)"},
    {40, Subscale::economic, "economy", R"(The free market provides sufficient incentives for businesses to pursue the greater good.)"},
    {41, Subscale::economic, "economy", R"(Government policies should prioritise the greater good over the needs of individual businesses.)"},
    {42, Subscale::economic, "economy", R"(People who are financially successful are being rewarded for their contributions to society.)"},
    {43, Subscale::economic, "economy", R"(Usually people in need are poor because of laziness or lack of willpower.)"},
    {44, Subscale::economic, "economy", R"(The government should take measures to assure that everyone has similar opportunities to improve their economic conditions.)"},
    {45, Subscale::economic, "economy", R"(The government should prioritize opportunities for economic growth over economic equality.)"},
    {46, Subscale::economic, "economy", R"(The government should prioritize economic equality over opportunities for economic growth.)"},
    {47, Subscale::social, "equality", R"(Our society should do whatever is necessary to make sure that everyone has an equal opportunity to succeed.)"},
    {48, Subscale::social, "equality", R"(Lack of equal opportunities is a major issue in this country.)"},
    {49, Subscale::social, "equality", R"(Treating people more equally could help solve various societal problems.)"},
    {50, Subscale::social, "equality", R"(It is not really that big a problem if some people have more of a chance in life than others.)"},
    {51, Subscale::social, "equality", R"(This country would be better off if we worried less about how equal people are.)"},
    {52, Subscale::social, "equality", R"(The pursuit of equal rights has gone too far in this country.)"},
    {53, Subscale::social, "family", R"(Parents and children must stay together as much as possible)"},
    {54, Subscale::social, "family", R"(It is a family member’s duty to take care of their family, even when they have to sacrifice what they want.)"},
    {55, Subscale::social, "family", R"(Family members should prioritize their familial relationships, even if it requires personal sacrifices)"},
    {56, Subscale::social, "family", R"(Policy should focus on the importance and maintenance of stable nuclear families)"},
    {57, Subscale::social, "family", R"(The traditional nuclear family represents the preferred family arrangement)"},
    {58, Subscale::social, "family", R"(Socio-economic problems reside in an individual’s upbringing, that is the family ties they grew up with.)"},
    {59, Subscale::social, "family", R"(Policies that promote the classical nuclear family are discriminatory against non-traditional families.)"},
    {60, Subscale::social, "family", R"(Socio-economic challenges are mainly rooted in an individual’s family upbringing and environment.)"},
    {61, Subscale::social, "family", R"(Women should prioritise maintaining family stability and cohesion over their personal ambitions.)"},
    {62, Subscale::social, "family", R"(Good mothers stay home raising their children.)"},
    {63, Subscale::social, "patriotism", R"(It is important to always support one’s country, whether it was right or wrong.)"},
    {64, Subscale::social, "patriotism", R"(No one chooses their country of birth, so it’s foolish to be proud of it.)"},
    {65, Subscale::social, "patriotism", R"(People should support their country’s leaders even if they disagree with their actions.)"},
    {66, Subscale::social, "patriotism", R"(People who do not wholeheartedly support their country should live elsewhere.)"},
    {67, Subscale::social, "patriotism", R"(People should be proud of their country’s achievements)"},
    {68, Subscale::economic, "welfare", R"(It is the government’s responsibility to ensure that everybody be granted welfare benefits.)"},
    {69, Subscale::social, "abortion", R"(Abortion should be illegal.)"},
    {70, Subscale::social, "abortion", R"(Abortion should be legal if the pregnancy constitutes a serious health threat to the mother.)"},
    {71, Subscale::social, "abortion", R"(Abortion should be legal if the pregnancy is the consequence of a crime.)"},
    {72, Subscale::social, "abortion", R"(Abortion should be legal within the first 12 weeks of pregnancy.)"},
    {73, Subscale::economic, "pensions", R"(It is the duty of the government to pay pensions.)"},
    {74, Subscale::economic, "pensions", R"(The government should provide the same pension amount to everyone, regardless of their income or contributions.)"},
    {75, Subscale::economic, "pensions", R"(The state should only pay pensions to the poor.)"},
    {76, Subscale::economic, "pensions", R"(People who have spent a certain amount of time in the workforce should have access to state-funded pensions.)"},
    {77, Subscale::economic, "pensions", R"(People with higher incomes during their time spent in the workforce should also have higher state-funded pensions.)"},
    {78, Subscale::social, "immigration", R"(Unaccompanied minors who decide to come to country should be allowed to stay in country.)"},
    {79, Subscale::social, "immigration", R"(Refugees who are fleeing from armed conflicts in their home country should be allowed to stay in country.)"},
    {80, Subscale::social, "immigration", R"(Refugees who are fleeing from the consequences of climate change in their home country should be allowed to stay in country.)"},
    {81, Subscale::social, "immigration", R"(Migrants who are allowed to remain in country should be grateful for that.)"},
    {82, Subscale::social, "immigration", R"(Migrants who are allowed to remain in country do not have a right to complain about their circumstances.)"},
    {83, Subscale::social, "immigration", R"(Migrants with work skills from which the economy of country can profit, should be allowed to stay in country.)"},
    {84, Subscale::social, "immigration", R"(Migrants who have a job and pay taxes should be allowed to stay in country.)"},
    {85, Subscale::social, "immigration", R"(Migrants who can positively contribute to the culture of country should be allowed to stay.)"},
    {86, Subscale::social, "immigration", R"(Migrants with a similar cultural background as the country population should be allowed to stay.)"},
    {87, Subscale::social, "immigration", R"(Migrants with similar religious backgrounds as the country population should be allowed to stay.)"},
    {88, Subscale::social, "immigration", R"(Migrants with a similar ethnic background as the country population should be allowed to stay.)"},
    {89, Subscale::social, "immigration", R"(Poor migrants with dependent young children should be allowed to stay.)"},
    {90, Subscale::social, "immigration", R"(Migrants who are truly poor should be allowed to stay)"},
    {91, Subscale::social, "gun-regulation", R"(A well regulated Militia, being necessary to the security of a free State, the right of the people to keep and bear Arms, shall not be infringed.)"},
    {92, Subscale::social, "gun-regulation", R"(On the issue of gun regulation, do you support the following proposal: Ban assault rifles.)"},
    {93, Subscale::social, "gun-regulation", R"(On the issue of gun regulation, do you support the following proposal: Provide federal funding to encourage states to take guns away from people who already own them but might pose a threat to themselves or others.)"},
    {94, Subscale::social, "gun-regulation", R"(On the issue of gun regulation, do you support the following proposal: Improve background checks to give authorities time to check the juvenile and mental health records of any prospective gun buyer under the age of 21.)"},
    {95, Subscale::social, "gun-regulation", R"(On the issue of gun regulation, do you support the following proposal: Prohibit state and local governments from publishing the names and addresses of all gun owners.)"},
    {96, Subscale::social, "gun-regulation", R"(On the issue of gun regulation, do you support the following proposal: Make it easier for people to obtain concealed-carry permit.)"},
    {97, Subscale::social, "gun-regulation", R"(On the issue of gun regulation, do you support the following proposal: Allow teachers and school officials to carry guns in public schools.)"},
    {98, Subscale::social, "religion", R"(State and religion must be separated in a 'good' state.)"},
    {99, Subscale::social, "religion", R"(Freedom in religion is a fundamental pillar in a just society.)"},
    {100, Subscale::social, "religion", R"(It is ok if government decisions, laws etc. are based on religious belief.)"},
    {101, Subscale::social, "religion", R"(School-prayer and educational policies that align with religious teachings should be allowed.)"},
    {102, Subscale::social, "religion", R"(People should derive their moral standards from their religion.)"},
    {103, Subscale::social, "religion", R"(People should be encouraged to develop their own moral standards.)"},
    {104, Subscale::social, "religion", R"(God’s laws about abortion, pornography, and marriage must be strictly followed before it is too late.)"},
    {105, Subscale::social, "religion", R"(Violations of God’s laws about abortion, pornography, and marriage must be punished.)"},
};
// clang-format on

constexpr int kBuiltinRecodeIds[] = {
    8, 9, 10, 11, 12, 13, 14, 15, 17, 18, 19, 21,
    23, 24, 26, 28, 29, 30, 31, 32, 33, 35, 36, 38,
    39, 41, 46, 47, 48, 49, 58, 59, 60, 64, 68, 70,
    71, 72, 73, 74, 75, 76, 78, 79, 80, 81, 89, 90,
    92, 93, 94, 98, 103,
};

}  // namespace

ItemBank builtin_item_bank() {
  std::vector<Item> items;
  items.reserve(std::size(kBuiltinItems));
  for (const auto& b : kBuiltinItems) {
    items.push_back(Item{b.id, b.text, b.subscale, false, {b.tag}});
  }
  std::set<int> recode(std::begin(kBuiltinRecodeIds), std::end(kBuiltinRecodeIds));
  return ItemBank(std::move(items), std::string(kBuiltinBankVersion), std::move(recode));
}

}  // namespace irtbias
