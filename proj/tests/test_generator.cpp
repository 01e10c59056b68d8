#include <cmath>
#include <random>

#include "doctest.h"
#include "geoprog/error.hpp"
#include "geoprog/generator.hpp"
#include "geoprog/trainer.hpp"
#include "helpers.hpp"

using namespace geoprog;

namespace {

struct Fixture {
    DslRegistry reg = testing::small_registry();
    std::vector<PreprocessedProblem> corpus;
    Fixture() {
        std::mt19937_64 rng(31);
        for (const auto& t : testing::sample_texts()) corpus.push_back(testing::problem_from(t, rng, 2));
    }
};

std::vector<double> row_of(const nn::Tape& t, nn::Var m, std::size_t r) {
    const auto v = t.value(m);
    const std::size_t c = t.cols(m);
    return {v.begin() + static_cast<std::ptrdiff_t>(r * c), v.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)};
}

}  // namespace

TEST_CASE("value table layout") {
    Fixture f;
    const ModelState m = testing::random_model(f.reg, f.corpus, 8, 1);
    nn::Tape t;
    auto plain = f.corpus[0];
    plain.numbers.clear();
    plain.elements.clear();
    const auto rep = encode(t, m, plain, Grad::Off);
    CHECK(t.rows(build_values(t, m, rep, plain, Grad::Off)) == f.reg.static_size());

    const auto& p = f.corpus[1];
    const auto rep1 = encode(t, m, p, Grad::Off);
    const nn::Var V1 = build_values(t, m, rep1, p, Grad::Off);
    CHECK(t.rows(V1) == p.vocabulary(f.reg).size());

    // A second parameter set with different encoder weights changes only dynamic rows.
    ModelState m2 = m;
    for (auto& v : m2.params().get("enc.tok_emb").value) v *= 1.5;
    const auto rep2 = encode(t, m2, p, Grad::Off);
    const nn::Var V2 = build_values(t, m2, rep2, p, Grad::Off);
    for (std::size_t r = 0; r < f.reg.static_size(); ++r) CHECK(row_of(t, V1, r) == row_of(t, V2, r));
    CHECK(row_of(t, V1, f.reg.static_size()) != row_of(t, V2, f.reg.static_size()));
}

TEST_CASE("attention pooling against direct evaluation") {
    Fixture f;
    ModelState m = testing::random_model(f.reg, f.corpus, 8, 2);
    nn::Tape t;
    const auto& p = f.corpus[0];
    DecodeContext ctx = open_context(t, m, p, TypeId{0});
    const DecoderState st = initial_state(ctx);
    const auto att = attention_pool(ctx, st.prev_value);

    const std::size_t h = 8, n = t.rows(ctx.rep.H);
    const auto H = t.to_vector(ctx.rep.H);
    const auto prev = t.to_vector(st.prev_value);
    const auto& w3 = m.params().get("gen.w3");
    const auto& w4 = m.params().get("gen.w4");
    std::vector<double> u(h, 0.0), score(n, 0.0), a(n), pooled(h, 0.0);
    for (std::size_t c = 0; c < h; ++c)
        for (std::size_t k = 0; k < h; ++k) u[c] += prev[k] * w3.at(k, c);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < h; ++r) {
            double k = 0;
            for (std::size_t c = 0; c < h; ++c) k += w4.at(r, c) * H[i * h + c];
            score[i] += u[r] * k;
        }
    double mx = *std::max_element(score.begin(), score.end()), z = 0;
    for (std::size_t i = 0; i < n; ++i) z += a[i] = std::exp(score[i] - mx);
    double asum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        a[i] /= z;
        asum += t.value(att.weights)[i];
        for (std::size_t c = 0; c < h; ++c) pooled[c] += a[i] * H[i * h + c];
    }
    CHECK(asum == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t i = 0; i < n; ++i) CHECK(t.value(att.weights)[i] == doctest::Approx(a[i]).epsilon(1e-10));
    for (std::size_t c = 0; c < h; ++c) CHECK(t.value(att.pooled)[c] == doctest::Approx(pooled[c]).epsilon(1e-10));

    // W3 = 0: uniform weights, pooled = row mean.
    auto& w3m = m.params().get("gen.w3");
    std::fill(w3m.value.begin(), w3m.value.end(), 0.0);
    nn::Tape t2;
    DecodeContext c2 = open_context(t2, m, p, TypeId{0});
    const auto a2 = attention_pool(c2, initial_state(c2).prev_value);
    for (double w : t2.value(a2.weights)) CHECK(w == doctest::Approx(1.0 / static_cast<double>(n)));
}

TEST_CASE("single-row joint representation attends with weight 1") {
    Fixture f;
    const ModelState m = testing::random_model(f.reg, f.corpus, 8, 3);
    nn::Tape t;
    auto one = preprocess("find", {});
    one.id = "one";
    DecodeContext ctx = open_context(t, m, one, TypeId{0});
    REQUIRE(t.rows(ctx.rep.H) == 1);
    const auto att = attention_pool(ctx, initial_state(ctx).prev_value);
    CHECK(t.value(att.weights)[0] == 1.0);
    for (std::size_t c = 0; c < 8; ++c) CHECK(t.value(att.pooled)[c] == t.value(ctx.rep.H)[c]);
}

TEST_CASE("mask soundness along random decodes") {
    Fixture f;
    std::mt19937_64 rng(9);
    for (int seed = 0; seed < 6; ++seed) {
        const ModelState m = testing::random_model(f.reg, f.corpus, 8, static_cast<std::uint64_t>(seed));
        for (const auto& p : f.corpus) {
            for (TypeId type : {TypeId{0}, TypeId{1}}) {
                nn::Tape t;
                DecodeContext ctx = open_context(t, m, p, type);
                const auto vocab = p.vocabulary(f.reg);
                DecoderState st = initial_state(ctx);
                CHECK(st.last == f.reg.sos());
                int emitted = 0;
                while (st.phase != Phase::Done) {
                    const auto out = query_step(ctx, st);
                    const auto probs = step_probs(ctx, out);
                    double s = 0;
                    for (std::size_t i = 0; i < probs.size(); ++i) {
                        s += probs[i];
                        const auto id = static_cast<SymbolId>(i);
                        const auto kind = vocab.kind(id);
                        if (!vocab.is_dynamic(id) && !f.reg.entry(id).in_type(type)) CHECK(probs[i] == 0.0);
                        if (out.phase == Phase::Operator && is_operand_kind(kind)) CHECK(probs[i] == 0.0);
                        if (out.phase == Phase::Operand && kind == SymbolKind::Operator) CHECK(probs[i] == 0.0);
                        if (auto j = f.reg.cache_index(id); j && *j >= st.sub_index) CHECK(probs[i] == 0.0);
                    }
                    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
                    const auto h_op = t.to_vector(st.h_op);
                    // Sample an allowed symbol so that many paths are covered.
                    std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
                    const auto chosen = static_cast<SymbolId>(pick(rng));
                    const Phase before = st.phase;
                    advance(ctx, st, out, chosen);
                    if (before == Phase::Operand) CHECK(t.to_vector(st.h_op) == h_op);
                    ++emitted;
                }
                CHECK(emitted <= f.reg.max_op() * (1 + f.reg.max_oe()) + 1);
            }
        }
    }
}

TEST_CASE("cache update strategies") {
    Fixture f;
    std::vector<std::vector<double>> rows;
    for (auto strategy : {CacheStrategy::LastOperandQuery, CacheStrategy::OperatorQuery,
                          CacheStrategy::OperatorEmbedding}) {
        ModelState m = testing::random_model(f.reg, f.corpus, 8, 4);
        m.config().cache_strategy = strategy;
        nn::Tape t;
        const auto& p = f.corpus[1];
        DecodeContext ctx = open_context(t, m, p, TypeId{0});
        DecoderState st = initial_state(ctx);
        const SymbolId add = *f.reg.lookup("add");
        const SymbolId n0 = p.vocabulary(f.reg).number(0);
        auto out = query_step(ctx, st);
        advance(ctx, st, out, add);
        const auto q_op0 = t.to_vector(out.query);
        out = query_step(ctx, st);
        advance(ctx, st, out, n0);
        const auto q_oe = t.to_vector(out.query);
        out = query_step(ctx, st);
        advance(ctx, st, out, f.reg.eos_operand());
        REQUIRE(st.sub_index == 1);
        REQUIRE(st.cache[0].has_value());
        CHECK_FALSE(st.cache[1].has_value());

        // Expected row: W_v · source.
        std::vector<double> src;
        if (strategy == CacheStrategy::LastOperandQuery) src = q_oe;
        if (strategy == CacheStrategy::OperatorQuery) src = q_op0;
        if (strategy == CacheStrategy::OperatorEmbedding) src = row_of(t, ctx.sym_emb, static_cast<std::size_t>(add));
        const auto& wv = m.params().get("gen.wv");
        const auto got = t.to_vector(st.cache[0]->value);
        for (std::size_t r = 0; r < 8; ++r) {
            double e = 0;
            for (std::size_t c = 0; c < 8; ++c) e += wv.at(r, c) * src[c];
            CHECK(got[r] == doctest::Approx(e).epsilon(1e-12));
        }
        CHECK(got != row_of(t, ctx.V0, static_cast<std::size_t>(f.reg.cache_token(0))));
        CHECK(t.to_vector(value_of(ctx, st, f.reg.cache_token(1))) ==
              row_of(t, ctx.V0, static_cast<std::size_t>(f.reg.cache_token(1))));
        rows.push_back(got);
        CHECK_THROWS_WITH_AS(update_cache(ctx, st, f.reg.max_op()), doctest::Contains("CacheIndexOutOfRange"), Error);
    }
    CHECK(rows[0] != rows[1]);
    CHECK(rows[1] != rows[2]);
    CHECK(rows[0] != rows[2]);
}

TEST_CASE("query gradient wrt W2 matches finite differences") {
    Fixture f;
    ModelState m = testing::random_model(f.reg, f.corpus, 8, 6);
    const auto& p = f.corpus[1];
    auto fn = [&](nn::Tape& t) {
        DecodeContext ctx = open_context(t, m, p, TypeId{0}, Grad::On);
        DecoderState st = initial_state(ctx);
        auto out = query_step(ctx, st);
        advance(ctx, st, out, *f.reg.lookup("mul"));
        out = query_step(ctx, st);
        return t.sum_all(t.mul(out.query, out.query));
    };
    const auto r = nn::grad_check(m.params(), fn, 1e-5, 4);
    CHECK(r.max_rel_error.at("gen.w2") <= 1e-4);
    CHECK(r.max_rel_error.at("gen.op_cell.wx") <= 1e-4);
}

TEST_CASE("greedy decoding limits and literal-mode agreement") {
    Fixture f;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ModelState m = testing::random_model(f.reg, f.corpus, 8, seed);
        for (const auto& p : f.corpus) {
            DecodeOptions one;
            one.max_op = 1;
            const auto r = greedy_decode(m, p, one);
            CHECK(r.program.subs.size() == 1);

            DecodeOptions norm, lit;
            norm.record_trace = lit.record_trace = true;
            lit.mode = nn::SoftmaxMode::Literal;
            const auto a = greedy_decode(m, p, norm);
            const auto b = greedy_decode(m, p, lit);
            CHECK(canonical_equal(a.program, b.program));
            CHECK(a.log_prob == doctest::Approx(b.log_prob).epsilon(1e-12));
            REQUIRE(a.trace.size() == b.trace.size());
            for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].chosen == b.trace[i].chosen);
            CHECK_NOTHROW(validate(a.program, p.vocabulary(f.reg)));
        }
    }
}

TEST_CASE("a model fitted to one program decodes it greedily") {
    Fixture f;
    std::mt19937_64 rng(1);
    auto p = testing::problem_from("add 3 and 4 now", rng, 1);
    p.problem_type = 0;
    const auto vocab = p.vocabulary(f.reg);
    p.gold = from_nested(nlohmann::json::parse(R"([{"op":"add","args":["N_0","N_1"]}])"), vocab, 0);
    TrainConfig cfg;
    cfg.model.hidden = 8;
    cfg.model.layers = 1;
    cfg.model.patch_dim = 4;
    cfg.lr = 0.02;
    cfg.epochs = 150;
    cfg.batch_size = 1;
    cfg.schedule.table = {{1, 1.0}};
    const ModelState m = train(cfg, f.reg, {p});
    DecodeOptions opt;
    opt.record_trace = true;
    const auto r = greedy_decode(m, p, opt);
    CHECK(to_flat(r.program, vocab) == std::vector<std::string>{"add", "N_0", "N_1", "eos_operand", "eop"});
    CHECK(r.trace.size() == 5);
}
