#pragma once

#include <string_view>

namespace hltm {

// Common English function words. Tokens shorter than three characters are
// dropped before this list is consulted, so two-letter words are omitted.
inline constexpr std::string_view kEnglishStopwords[] = {
    "about",    "above",   "across",   "after",   "again",   "against",
    "all",      "almost",  "alone",    "along",   "already", "also",
    "although", "always",  "among",    "and",     "another", "any",
    "anyone",   "anything", "are",     "around",  "because", "been",
    "before",   "being",   "below",    "between", "both",    "but",
    "can",      "cannot",  "could",    "did",     "does",    "doing",
    "done",     "down",    "during",   "each",    "either",  "else",
    "enough",   "even",    "ever",     "every",   "few",     "for",
    "from",     "further", "had",      "has",     "have",    "having",
    "her",      "here",    "hers",     "herself", "him",     "himself",
    "his",      "how",     "however",  "into",    "its",     "itself",
    "just",     "least",   "less",     "many",    "may",     "might",
    "more",     "most",    "much",     "must",    "myself",  "neither",
    "never",    "nor",     "not",      "nothing", "now",     "off",
    "often",    "once",    "one",      "only",    "other",   "others",
    "our",      "ours",    "ourselves", "out",    "over",    "own",
    "perhaps",  "per",     "rather",   "said",    "same",    "says",
    "see",      "shall",   "she",      "should",  "since",   "some",
    "still",    "such",    "than",     "that",    "the",     "their",
    "theirs",   "them",    "themselves", "then",  "there",   "these",
    "they",     "this",    "those",    "though",  "through", "thus",
    "too",      "toward",  "under",    "until",   "upon",    "very",
    "was",      "way",     "were",     "what",    "when",    "where",
    "whether",  "which",   "while",    "who",     "whom",    "whose",
    "why",      "will",    "with",     "within",  "without", "would",
    "yet",      "you",     "your",     "yours",   "yourself", "yourselves",
    "get",      "got",
};

}  // namespace hltm
