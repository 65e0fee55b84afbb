#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "nmtlab/data.hpp"
#include "nmtlab/errors.hpp"

using namespace nmtlab;

TEST_CASE("vocabulary of a single token has size 5") {
    Vocabulary v = build_vocab({{"a"}});
    CHECK(v.size() == 5);
    CHECK(v.id("a") == 4);
    CHECK(v.id("<unk>") == kUnkId);
    CHECK(v.token(kPadId) == "<pad>");
    CHECK(v.token(kBosId) == "<s>");
    CHECK(v.token(kEosId) == "</s>");
}

TEST_CASE("equal-frequency tokens get lexicographic ids") {
    Vocabulary v = build_vocab({{"zeta", "alpha"}});
    CHECK(v.id("alpha") == 4);
    CHECK(v.id("zeta") == 5);
}

TEST_CASE("vocabulary id order matches an independent sort oracle") {
    Rng rng(5);
    std::vector<std::vector<std::string>> corpus;
    std::map<std::string, long long> freq;
    for (int i = 0; i < 200; ++i) {
        std::string tok(1, static_cast<char>('a' + rng.uniform_int(14)));
        tok += static_cast<char>('a' + rng.uniform_int(14));
        corpus.push_back({tok});
        freq[tok]++;
    }
    Vocabulary v = build_vocab(corpus);
    std::vector<std::pair<std::string, long long>> oracle(freq.begin(), freq.end());
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    REQUIRE(v.size() == static_cast<int>(oracle.size()) + 4);
    for (size_t i = 0; i < oracle.size(); ++i) CHECK(v.token(static_cast<int>(i) + 4) == oracle[i].first);
}

TEST_CASE("min_count drops rare tokens to UNK at encode time") {
    Vocabulary v = build_vocab({{"common", "common", "rare"}}, 2);
    CHECK(v.contains("common"));
    CHECK(!v.contains("rare"));
    auto ids = encode_source(v, {"rare", "common"});
    CHECK(ids[0] == kUnkId);
    CHECK(ids[1] == v.id("common"));
}

TEST_CASE("empty corpus is a data error") { CHECK_THROWS_AS(build_vocab({}), DataError); }

TEST_CASE("encode adds BOS/EOS to the target side only") {
    Vocabulary v = build_vocab({{"a", "b"}});
    auto src = encode_source(v, {"a", "b"});
    auto tgt = encode_target(v, {"a", "b"});
    REQUIRE(src.size() == 2);
    REQUIRE(tgt.size() == 4);
    CHECK(tgt.front() == kBosId);
    CHECK(tgt.back() == kEosId);
    CHECK(tgt[1] == src[0]);
}

TEST_CASE("decode strips specials and round-trips known sentences") {
    Vocabulary v = build_vocab({{"x", "y", "z"}});
    std::vector<std::string> sent = {"z", "x", "y"};
    CHECK(decode_tokens(v, encode_target(v, sent)) == sent);
    CHECK(decode_tokens(v, encode_source(v, sent)) == sent);
}

TEST_CASE("fuzz: decode(encode(s)) equals s with unknowns replaced by UNK token") {
    Rng rng(11);
    Vocabulary v = build_vocab({{"aa", "bb", "cc", "dd"}});
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> sent;
        int len = 1 + rng.uniform_int(8);
        for (int i = 0; i < len; ++i) {
            static const std::vector<std::string> pool = {"aa", "bb", "cc", "dd", "zz", "qq"};
            sent.push_back(pool[static_cast<size_t>(rng.uniform_int(static_cast<int>(pool.size())))]);
        }
        auto roundtrip = decode_tokens(v, encode_target(v, sent));
        REQUIRE(roundtrip.size() == sent.size());
        for (size_t i = 0; i < sent.size(); ++i) {
            if (v.contains(sent[i]))
                CHECK(roundtrip[i] == sent[i]);
            else
                CHECK(roundtrip[i] == "<unk>");
        }
    }
}

namespace {

std::vector<SentencePair> make_pairs(Rng& rng, int n, int max_len) {
    std::vector<SentencePair> out;
    for (int i = 0; i < n; ++i) {
        SentencePair p;
        int src_len = 1 + rng.uniform_int(max_len);
        int tgt_len = 1 + rng.uniform_int(max_len);
        for (int j = 0; j < src_len; ++j) p.src.push_back(4 + rng.uniform_int(10));
        p.tgt.push_back(kBosId);
        for (int j = 0; j < tgt_len; ++j) p.tgt.push_back(4 + rng.uniform_int(10));
        p.tgt.push_back(kEosId);
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace

TEST_CASE("four pairs of 512 target tokens pack into one batch of 2048") {
    std::vector<SentencePair> pairs;
    for (int i = 0; i < 4; ++i) {
        SentencePair p;
        p.src = {4, 5};
        p.tgt.assign(512, 6); // includes the specials in the 512 budget
        p.tgt.front() = kBosId;
        p.tgt.back() = kEosId;
        pairs.push_back(p);
    }
    auto batches = make_batches(pairs, 2048, 1);
    REQUIRE(batches.size() == 1);
    CHECK(batches[0].rows == 4);
    CHECK(batches[0].token_count == 2048);
}

TEST_CASE("budget 1 puts one pair per batch") {
    Rng rng(3);
    auto pairs = make_pairs(rng, 7, 4);
    auto batches = make_batches(pairs, 1, 9);
    CHECK(batches.size() == pairs.size());
    for (const auto& b : batches) CHECK(b.rows == 1);
}

TEST_CASE("oversized pair is emitted alone") {
    Rng rng(4);
    auto pairs = make_pairs(rng, 3, 3);
    SentencePair big;
    big.src = {4};
    big.tgt.assign(50, 5);
    big.tgt.front() = kBosId;
    big.tgt.back() = kEosId;
    pairs.push_back(big);
    auto batches = make_batches(pairs, 20, 2);
    bool found = false;
    for (const auto& b : batches)
        if (b.rows == 1 && b.tgt_len[0] == 50) found = true;
    CHECK(found);
}

TEST_CASE("batches cover the corpus exactly once (multiset equality)") {
    Rng rng(12);
    auto pairs = make_pairs(rng, 57, 9);
    auto batches = make_batches(pairs, 40, 99);
    std::multiset<std::pair<std::vector<int>, std::vector<int>>> want, got;
    for (const auto& p : pairs) want.insert({p.src, p.tgt});
    for (const auto& b : batches)
        for (int r = 0; r < b.rows; ++r) got.insert({b.src_row(r), b.tgt_row(r)});
    CHECK(want == got);
}

TEST_CASE("identical seed gives identical batch sequence, different seed shuffles") {
    Rng rng(21);
    auto pairs = make_pairs(rng, 40, 6);
    auto a = make_batches(pairs, 30, 7);
    auto b = make_batches(pairs, 30, 7);
    REQUIRE(a.size() == b.size());
    bool all_equal = true;
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].src == b[i].src);
        CHECK(a[i].tgt == b[i].tgt);
    }
    auto c = make_batches(pairs, 30, 8);
    REQUIRE(c.size() == a.size());
    bool any_diff = false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].tgt != c[i].tgt) any_diff = true;
    CHECK(any_diff);
    (void)all_equal;
}

TEST_CASE("padding is masked and token_count counts non-pad target tokens") {
    std::vector<SentencePair> pairs;
    pairs.push_back({{4, 5, 6}, {kBosId, 7, kEosId}});
    pairs.push_back({{4}, {kBosId, 7, 8, 9, kEosId}});
    auto batches = make_batches(pairs, 100, 5);
    REQUIRE(batches.size() == 1);
    const Batch& b = batches[0];
    CHECK(b.token_count == 8);
    for (int r = 0; r < b.rows; ++r) {
        for (int c = 0; c < b.max_tgt; ++c) {
            if (b.tgt_masked(r, c))
                CHECK(b.tgt_at(r, c) == kPadId);
            else
                CHECK(b.tgt_at(r, c) != kPadId);
        }
    }
}

TEST_CASE("vocabulary save/load keeps ids stable") {
    Vocabulary v = build_vocab({{"foo", "bar", "foo"}});
    auto path = std::filesystem::temp_directory_path() / "nmtlab_vocab_test.tsv";
    v.save(path.string());
    Vocabulary loaded = Vocabulary::load(path.string());
    CHECK(loaded.size() == v.size());
    CHECK(loaded.id("foo") == v.id("foo"));
    CHECK(loaded.id("bar") == v.id("bar"));
    std::filesystem::remove(path);
}
