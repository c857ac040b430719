//
// Copyright 2026 The toxcg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Targeted Lexicon Sets: mining misclassified samples, extracting and
// grouping the words behind them, and Word-Concept Alignment scoring.

#ifndef TOXCG_LEXICON_HPP_
#define TOXCG_LEXICON_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "toxcg/attribution.hpp"
#include "toxcg/core.hpp"
#include "toxcg/corpus.hpp"
#include "toxcg/llmclient.hpp"
#include "toxcg/nnet.hpp"

namespace toxcg {

// ---------------------------------------------------------------------------
// Stop words
// ---------------------------------------------------------------------------

namespace detail {

// Same bytes as data/stopwords_en.txt.
inline constexpr std::string_view kEnglishStopwords = R"(i
me
my
myself
we
our
ours
ourselves
you
you're
you've
you'll
you'd
your
yours
yourself
yourselves
he
him
his
himself
she
she's
her
hers
herself
it
it's
its
itself
they
them
their
theirs
themselves
what
which
who
whom
this
that
that'll
these
those
am
is
are
was
were
be
been
being
have
has
had
having
do
does
did
doing
a
an
the
and
but
if
or
because
as
until
while
of
at
by
for
with
about
against
between
into
through
during
before
after
above
below
to
from
up
down
in
out
on
off
over
under
again
further
then
once
here
there
when
where
why
how
all
any
both
each
few
more
most
other
some
such
no
nor
not
only
own
same
so
than
too
very
s
t
can
will
just
don
don't
should
should've
now
d
ll
m
o
re
ve
y
ain
aren
aren't
couldn
couldn't
didn
didn't
doesn
doesn't
hadn
hadn't
hasn
hasn't
haven
haven't
isn
isn't
ma
mightn
mightn't
mustn
mustn't
needn
needn't
shan
shan't
shouldn
shouldn't
wasn
wasn't
weren
weren't
won
won't
wouldn
wouldn't
)";

}  // namespace detail

using WordSet = std::unordered_set<std::string>;

inline WordSet parse_stopwords(std::string_view text) {
  WordSet words;
  for (const auto& line : split_lines(text)) {
    const auto w = ascii_lower(trim(line));
    if (!w.empty() && w.front() != '#') words.insert(w);
  }
  return words;
}

inline const WordSet& english_stopwords() {
  static const WordSet words = parse_stopwords(detail::kEnglishStopwords);
  return words;
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct MisclassifiedEntry {
  Sample sample;
  int predicted = 0;
};

struct MisclassifiedSet {
  std::vector<MisclassifiedEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

enum class WordStage { kRaw, kCleaned };

struct WordList {
  std::vector<std::string> words;
  WordStage stage = WordStage::kRaw;
};

enum class Provenance { kLlm, kFallback };

inline std::string_view to_string(Provenance p) { return p == Provenance::kLlm ? "llm" : "fallback"; }

inline Provenance provenance_from_string(std::string_view s) {
  if (s == "llm") return Provenance::kLlm;
  if (s == "fallback") return Provenance::kFallback;
  fail(ErrorKind::kSchema, "unknown lexicon provenance: " + std::string(s));
}

struct LexiconSet {
  int set_id = 0;
  std::vector<std::string> words;  // unique, in group order
  Provenance provenance = Provenance::kFallback;
  std::size_t member_sentence_count = 0;

  bool contains(const std::string& token) const {
    return std::find(words.begin(), words.end(), token) != words.end();
  }
};

// ---------------------------------------------------------------------------
// Mining
// ---------------------------------------------------------------------------

/// Samples whose predicted label disagrees with the true label.
inline MisclassifiedSet mine_misclassified(const Model& model, const Corpus& test) {
  const auto predictions = predict_corpus(model, test);
  MisclassifiedSet mis;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (predictions.labels[i] != test.samples[i].label) {
      mis.entries.push_back({test.samples[i], predictions.labels[i]});
    }
  }
  return mis;
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

enum class ExtractorKind { kLlm, kGradientFallback };

inline ExtractorKind extractor_kind_from_string(std::string_view s) {
  if (s == "llm") return ExtractorKind::kLlm;
  if (s == "gradient_fallback" || s == "fallback") return ExtractorKind::kGradientFallback;
  fail(ErrorKind::kConfig, "unknown extractor: " + std::string(s));
}

struct ExtractionResult {
  WordList raw;
  std::vector<std::pair<std::string, std::vector<std::string>>> per_sample;
  std::vector<std::pair<std::string, std::string>> skipped;  // (sample id, reason)
};

/// Renders the extraction prompt for every sample and parses each response.
/// A sample whose request or response fails is skipped and logged.
inline ExtractionResult extract_words_llm(const MisclassifiedSet& mis, LlmClient& client,
                                          const PromptTemplate& prompt) {
  std::vector<std::string> prompts;
  prompts.reserve(mis.size());
  for (const auto& e : mis.entries) {
    prompts.push_back(render(prompt, {{"sentence", e.sample.text}, {"prediction", std::to_string(e.predicted)}}));
  }
  const auto completions = client.complete_all(prompts);
  ExtractionResult out;
  for (std::size_t k = 0; k < mis.size(); ++k) {
    const auto& id = mis.entries[k].sample.id;
    if (!completions[k].text) {
      out.skipped.emplace_back(id, completions[k].error);
      continue;
    }
    try {
      auto words = parse_word_list(*completions[k].text);
      out.raw.words.insert(out.raw.words.end(), words.begin(), words.end());
      out.per_sample.emplace_back(id, std::move(words));
    } catch (const Error& e) {
      out.skipped.emplace_back(id, e.what());
    }
  }
  return out;
}

struct TokenContribution {
  std::string token;
  double contribution = 0.0;  // gradient x input through the token's unigram bucket
  double ablation = 0.0;      // predicted-class logit drop when the token is removed
};

/// Gradient x input of the predicted-class logit, attributed to each
/// distinct token through its unigram feature. Sorted by |contribution|
/// descending; near-ties are ordered by |ablation|, then by token.
inline std::vector<TokenContribution> token_contributions(const Model& model, std::string_view text, int predicted,
                                                          const WordSet& skip = {}) {
  const auto& fz = model.featurizer;
  if (std::find(fz.ngram_orders.begin(), fz.ngram_orders.end(), 1) == fz.ngram_orders.end()) {
    fail(ErrorKind::kConfig, "gradient extraction needs unigram features");
  }
  const auto tokens = tokenize(text, fz.lowercase);
  const SparseFeatures raw = fz.counts(text);
  double norm_sq = 0.0;
  for (const auto& [b, v] : raw) norm_sq += v * v;
  const double norm = std::sqrt(norm_sq);
  // A token's share of its normalized unigram bucket is count(token) / norm.
  std::map<std::string, double> counts;
  for (const auto& t : tokens) counts[t] += 1.0;

  const Eigen::VectorXd x = project(fz.features(text), model.params.embed);
  const double sign = predicted == 1 ? 1.0 : -1.0;
  const Eigen::VectorXd grad = sign * target_gradient(model.params, x);
  const double base_logit = sign * target_logit(model.params, x);

  std::vector<TokenContribution> out;
  for (const auto& [token, count] : counts) {
    if (skip.count(token) != 0) continue;
    TokenContribution c;
    c.token = token;
    const auto row = model.params.embed.row(fz.bucket(token));
    c.contribution = count / norm * row.dot(grad);
    std::string ablated;
    for (const auto& t : tokens) {
      if (t == token) continue;
      if (!ablated.empty()) ablated.push_back(' ');
      ablated += t;
    }
    if (!ablated.empty()) {
      c.ablation = base_logit - sign * target_logit(model.params, featurize(ablated, fz, model.params.embed));
    } else {
      c.ablation = base_logit - sign * target_logit(model.params, Eigen::VectorXd::Zero(x.size()));
    }
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const TokenContribution& a, const TokenContribution& b) {
    const double ma = std::abs(a.contribution);
    const double mb = std::abs(b.contribution);
    if (std::abs(ma - mb) > 1e-12 * std::max(1.0, std::max(ma, mb))) return ma > mb;
    if (std::abs(a.ablation) != std::abs(b.ablation)) return std::abs(a.ablation) > std::abs(b.ablation);
    return a.token < b.token;
  });
  return out;
}

struct GradientExtractorConfig {
  std::size_t top_k = 3;
  double relative_threshold = 0.25;  // keep tokens with |c| >= this * max |c|
};

/// Per sample, the top-k tokens by |gradient x input|, excluding stop words
/// and tokens far below the sample's strongest contribution.
inline ExtractionResult extract_words_gradient(const MisclassifiedSet& mis, const Model& model,
                                               const WordSet& stopwords = english_stopwords(),
                                               const GradientExtractorConfig& config = {}) {
  ExtractionResult out;
  for (const auto& e : mis.entries) {
    std::vector<std::string> words;
    try {
      const auto ranked = token_contributions(model, e.sample.text, e.predicted, stopwords);
      if (!ranked.empty()) {
        const double top = std::abs(ranked.front().contribution);
        for (const auto& c : ranked) {
          if (words.size() >= config.top_k) break;
          if (std::abs(c.contribution) < config.relative_threshold * top || c.contribution == 0.0) break;
          words.push_back(c.token);
        }
      }
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::kEmptyInput) throw;
      out.skipped.emplace_back(e.sample.id, err.what());
      continue;
    }
    out.raw.words.insert(out.raw.words.end(), words.begin(), words.end());
    out.per_sample.emplace_back(e.sample.id, std::move(words));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

/// Lowercases, splits multi-word entries into tokens, drops stop words and
/// duplicates. First-occurrence order is kept.
inline WordList clean(const WordList& raw, const WordSet& stopwords = english_stopwords()) {
  WordList out;
  out.stage = WordStage::kCleaned;
  std::unordered_set<std::string> seen;
  for (const auto& entry : raw.words) {
    for (auto& token : tokenize(entry, true)) {
      if (stopwords.count(token) != 0) continue;
      if (seen.insert(token).second) out.words.push_back(std::move(token));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Membership
// ---------------------------------------------------------------------------

/// Inverted index from case-folded token to the sorted sample positions
/// containing it.
class TokenIndex {
 public:
  explicit TokenIndex(const Corpus& corpus) : corpus_(&corpus) {
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto tokens = tokenize(corpus.samples[i].text, true);
      const std::set<std::string> distinct(tokens.begin(), tokens.end());
      for (const auto& t : distinct) postings_[t].push_back(i);
    }
  }

  std::vector<std::size_t> positions(const std::vector<std::string>& words) const {
    std::vector<std::size_t> out;
    for (const auto& w : words) {
      const auto it = postings_.find(ascii_lower(w));
      if (it == postings_.end()) continue;
      std::vector<std::size_t> merged;
      merged.reserve(out.size() + it->second.size());
      std::set_union(out.begin(), out.end(), it->second.begin(), it->second.end(), std::back_inserter(merged));
      out.swap(merged);
    }
    return out;
  }

  std::vector<std::string> sentences_containing(const LexiconSet& set) const {
    std::vector<std::string> ids;
    for (auto i : positions(set.words)) ids.push_back(corpus_->samples[i].id);
    return ids;
  }

  std::size_t count(const std::string& token) const {
    const auto it = postings_.find(token);
    return it == postings_.end() ? 0 : it->second.size();
  }

 private:
  const Corpus* corpus_;
  std::unordered_map<std::string, std::vector<std::size_t>> postings_;
};

/// Ids (in corpus order) of samples with any token in the set.
inline std::vector<std::string> sentences_containing(const Corpus& corpus, const LexiconSet& set) {
  return TokenIndex(corpus).sentences_containing(set);
}

// ---------------------------------------------------------------------------
// Grouping
// ---------------------------------------------------------------------------

enum class GrouperKind { kLlm, kClusterFallback };

inline GrouperKind grouper_kind_from_string(std::string_view s) {
  if (s == "llm") return GrouperKind::kLlm;
  if (s == "cluster_fallback" || s == "fallback") return GrouperKind::kClusterFallback;
  fail(ErrorKind::kConfig, "unknown grouper: " + std::string(s));
}

struct GroupingResult {
  std::vector<LexiconSet> sets;  // retained sets, ranked
  std::size_t groups_formed = 0;
  std::vector<std::string> warnings;
};

namespace detail {

// Makes groups disjoint (first group wins), keeps only words from the
// cleaned list, and drops groups left empty.
inline std::vector<std::vector<std::string>> resolve_groups(const std::vector<std::vector<std::string>>& groups,
                                                            const WordList& cleaned,
                                                            std::vector<std::string>& warnings) {
  const std::unordered_set<std::string> allowed(cleaned.words.begin(), cleaned.words.end());
  std::unordered_map<std::string, std::size_t> owner;
  std::vector<std::vector<std::string>> out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<std::string> members;
    for (const auto& entry : groups[g]) {
      for (const auto& token : tokenize(entry, true)) {
        if (allowed.count(token) == 0) continue;
        const auto [it, inserted] = owner.emplace(token, g);
        if (!inserted) {
          if (it->second != g) {
            warnings.push_back("word '" + token + "' appears in groups " + std::to_string(it->second + 1) + " and " +
                               std::to_string(g + 1) + "; kept in group " + std::to_string(it->second + 1));
          }
          continue;
        }
        members.push_back(token);
      }
    }
    if (!members.empty()) out.push_back(std::move(members));
  }
  return out;
}

// Ranks groups by train-corpus member sentence count (descending, stable)
// and keeps the top keep_top, numbering them from 1.
inline std::vector<LexiconSet> rank_groups(const std::vector<std::vector<std::string>>& groups, Provenance provenance,
                                           const TokenIndex& train_index, std::size_t keep_top) {
  std::vector<LexiconSet> sets;
  for (const auto& g : groups) {
    LexiconSet s;
    s.words = g;
    s.provenance = provenance;
    s.member_sentence_count = train_index.positions(g).size();
    sets.push_back(std::move(s));
  }
  std::stable_sort(sets.begin(), sets.end(), [](const LexiconSet& a, const LexiconSet& b) {
    return a.member_sentence_count > b.member_sentence_count;
  });
  if (sets.size() > keep_top) sets.resize(keep_top);
  for (std::size_t k = 0; k < sets.size(); ++k) sets[k].set_id = static_cast<int>(k + 1);
  return sets;
}

}  // namespace detail

/// Spherical k-means with k-means++ seeding. Rows of `vectors` must be
/// unit-norm. Returns a cluster index per row.
inline std::vector<std::size_t> spherical_kmeans(const Eigen::MatrixXd& vectors, std::size_t k, std::uint64_t seed,
                                                 int max_iterations = 100) {
  const auto n = static_cast<std::size_t>(vectors.rows());
  if (k == 0 || k > n) fail(ErrorKind::kSizing, "k-means needs 1 <= k <= points");
  Rng rng(seed);
  std::vector<std::size_t> centers_idx{rng.index(n)};
  Eigen::VectorXd best_dist = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 2.0);
  auto cosine_distance = [&](std::size_t i, const Eigen::VectorXd& c) { return 1.0 - vectors.row(i).dot(c); };
  while (centers_idx.size() < k) {
    const Eigen::VectorXd c = vectors.row(centers_idx.back()).transpose();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best_dist(i) = std::min(best_dist(i), std::max(0.0, cosine_distance(i, c)));
      total += best_dist(i) * best_dist(i);
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      // Every point coincides with a center; take the first unused one.
      while (std::find(centers_idx.begin(), centers_idx.end(), pick) != centers_idx.end()) ++pick;
    } else {
      double r = rng.uniform() * total;
      for (pick = 0; pick + 1 < n; ++pick) {
        r -= best_dist(pick) * best_dist(pick);
        if (r < 0.0) break;
      }
    }
    centers_idx.push_back(pick);
  }
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), vectors.cols());
  for (std::size_t c = 0; c < k; ++c) centers.row(c) = vectors.row(centers_idx[c]);

  std::vector<std::size_t> assign(n, k);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    const Eigen::MatrixXd sims = vectors * centers.transpose();
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      sims.row(i).maxCoeff(&best);
      if (assign[i] != static_cast<std::size_t>(best)) {
        assign[i] = static_cast<std::size_t>(best);
        changed = true;
      }
    }
    if (!changed) break;
    centers.setZero();
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      centers.row(assign[i]) += vectors.row(i);
      ++sizes[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) {
        // Re-seed an empty cluster with the point least similar to its center.
        std::size_t worst = 0;
        double worst_sim = 2.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double s = sims(i, assign[i]);
          if (s < worst_sim) {
            worst_sim = s;
            worst = i;
          }
        }
        centers.row(c) = vectors.row(worst);
        continue;
      }
      const double norm = centers.row(c).norm();
      if (norm > 0.0) centers.row(c) /= norm;
    }
  }
  return assign;
}

/// Word-by-word document co-occurrence counts over a corpus: entry (a, b) is
/// the number of samples containing both words.
inline Eigen::MatrixXd cooccurrence(const std::vector<std::string>& words, const Corpus& corpus) {
  const auto n = static_cast<Eigen::Index>(words.size());
  std::unordered_map<std::string, Eigen::Index> position;
  for (Eigen::Index k = 0; k < n; ++k) position.emplace(words[k], k);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
  for (const auto& s : corpus.samples) {
    std::set<Eigen::Index> present;
    for (const auto& t : tokenize(s.text, true)) {
      const auto it = position.find(t);
      if (it != position.end()) present.insert(it->second);
    }
    for (auto a : present) {
      for (auto b : present) counts(a, b) += 1.0;
    }
  }
  return counts;
}

struct GroupingConfig {
  std::size_t target_sets = 8;
  std::size_t keep_top = 5;
  std::uint64_t seed = 0;
};

/// Clusters words by cosine similarity of their co-occurrence vectors in
/// `cooc_corpus`. Words never seen there are dropped with a warning.
inline GroupingResult group_words_cluster(const WordList& cleaned, const Corpus& cooc_corpus, const Corpus& train,
                                          const GroupingConfig& config) {
  if (cleaned.words.empty()) fail(ErrorKind::kEmptyInput, "no words to group");
  GroupingResult out;
  const Eigen::MatrixXd counts = cooccurrence(cleaned.words, cooc_corpus);
  std::vector<std::string> seen_words;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index k = 0; k < counts.rows(); ++k) {
    if (counts.row(k).norm() > 0.0) {
      seen_words.push_back(cleaned.words[k]);
      rows.push_back(k);
    } else {
      out.warnings.push_back("word '" + cleaned.words[k] + "' never occurs in the corpus; left ungrouped");
    }
  }
  std::vector<std::vector<std::string>> groups;
  if (!seen_words.empty()) {
    Eigen::MatrixXd vectors(static_cast<Eigen::Index>(rows.size()), counts.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      vectors.row(static_cast<Eigen::Index>(r)) = counts.row(rows[r]) / counts.row(rows[r]).norm();
    }
    const std::size_t k = std::min(std::max<std::size_t>(config.target_sets, 1), seen_words.size());
    const auto assign = spherical_kmeans(vectors, k, derive_seed(config.seed, "group-kmeans"));
    // Clusters are numbered by their first member in word order.
    std::map<std::size_t, std::size_t> renumber;
    for (std::size_t i = 0; i < assign.size(); ++i) {
      const auto [it, inserted] = renumber.emplace(assign[i], groups.size());
      if (inserted) groups.emplace_back();
      groups[it->second].push_back(seen_words[i]);
    }
  }
  out.groups_formed = groups.size();
  out.sets = detail::rank_groups(groups, Provenance::kFallback, TokenIndex(train), config.keep_top);
  return out;
}

/// Sends the whole cleaned list in one grouping prompt.
inline GroupingResult group_words_llm(const WordList& cleaned, LlmClient& client, const PromptTemplate& prompt,
                                      const Corpus& train, const GroupingConfig& config) {
  if (cleaned.words.empty()) fail(ErrorKind::kEmptyInput, "no words to group");
  std::string joined;
  for (const auto& w : cleaned.words) {
    if (!joined.empty()) joined += ", ";
    joined += w;
  }
  const auto raw = parse_groups(client.complete(render(prompt, {{"words", joined}})));
  GroupingResult out;
  const auto groups = detail::resolve_groups(raw, cleaned, out.warnings);
  out.groups_formed = groups.size();
  out.sets = detail::rank_groups(groups, Provenance::kLlm, TokenIndex(train), config.keep_top);
  return out;
}

// ---------------------------------------------------------------------------
// WCA
// ---------------------------------------------------------------------------

struct WcaResult {
  int set_id = 0;
  std::optional<std::vector<double>> scores;  // nullopt when no sentence matched
  AggregateMode mode = AggregateMode::kAbsolute;
  std::size_t sentence_count = 0;
};

/// Per-concept mean of |CG| (absolute) or CG (signed) over the member samples.
inline WcaResult wca(const std::vector<AttributionRecord>& records, const std::vector<std::string>& members,
                     AggregateMode mode, std::size_t concept_count, int set_id = 0) {
  WcaResult r;
  r.set_id = set_id;
  r.mode = mode;
  r.sentence_count = members.size();
  if (members.empty()) return r;
  const auto means = detail::mean_scores(detail::index_records(records), members, concept_count, mode);
  std::vector<double> scores;
  for (const auto& v : means) scores.push_back(*v);
  r.scores = std::move(scores);
  return r;
}

/// Rows are sets, columns concepts.
inline std::string wca_csv(const std::vector<WcaResult>& results, const std::vector<std::string>& concepts) {
  std::string out = "set_id,mode,sentence_count";
  for (const auto& c : concepts) out += "," + csv_field(c);
  out += "\n";
  for (const auto& r : results) {
    out += std::to_string(r.set_id) + "," + std::string(to_string(r.mode)) + "," + std::to_string(r.sentence_count);
    for (std::size_t j = 0; j < concepts.size(); ++j) out += "," + (r.scores ? format_double((*r.scores)[j]) : "NA");
    out += "\n";
  }
  return out;
}

/// Per-sentence scores of the members of one set, for histogramming.
inline std::string wca_sentence_csv(const std::vector<AttributionRecord>& records,
                                    const std::vector<std::string>& members, int set_id,
                                    const std::vector<std::string>& concepts, AggregateMode mode) {
  const auto by_id = detail::index_records(records);
  std::string out = "set_id,sample_id";
  for (const auto& c : concepts) out += "," + csv_field(c);
  out += "\n";
  for (const auto& id : members) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorKind::kPairing, "no attribution record for sample " + id);
    out += std::to_string(set_id) + "," + csv_field(id);
    for (double v : it->second->scores) out += "," + format_double(mode == AggregateMode::kAbsolute ? std::abs(v) : v);
    out += "\n";
  }
  return out;
}

inline nlohmann::ordered_json lexicon_to_json(const std::vector<LexiconSet>& sets) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : sets) {
    nlohmann::ordered_json j;
    j["set_id"] = s.set_id;
    j["words"] = s.words;
    j["provenance"] = std::string(to_string(s.provenance));
    j["member_sentence_count"] = s.member_sentence_count;
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::vector<LexiconSet> lexicon_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) fail(ErrorKind::kSchema, "lexicon file must hold a JSON array");
  std::vector<LexiconSet> sets;
  for (const auto& j : arr) {
    LexiconSet s;
    s.set_id = j.at("set_id").get<int>();
    s.words = j.at("words").get<std::vector<std::string>>();
    s.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    s.member_sentence_count = j.at("member_sentence_count").get<std::size_t>();
    if (s.words.empty()) fail(ErrorKind::kSchema, "lexicon set " + std::to_string(s.set_id) + " has no words");
    sets.push_back(std::move(s));
  }
  return sets;
}

inline void save_lexicon(const std::filesystem::path& path, const std::vector<LexiconSet>& sets) {
  write_file(path, lexicon_to_json(sets).dump(2) + "\n");
}

inline std::vector<LexiconSet> load_lexicon(const std::filesystem::path& path) {
  try {
    return lexicon_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, "lexicon " + path.string() + ": " + e.what());
  }
}

}  // namespace toxcg

#endif  // TOXCG_LEXICON_HPP_
