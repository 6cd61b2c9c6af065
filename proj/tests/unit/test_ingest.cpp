#include "mecal/csv.hpp"
#include "mecal/error.hpp"
#include "mecal/ingest.hpp"
#include "mecal/measurement_table.hpp"
#include "mecal/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace mecal;

namespace {

std::vector<RawRecord> parse(const std::string& text, TableFormat format = {}) {
    std::istringstream in(text);
    return parse_table(in, format);
}

template <typename E>
std::size_t line_of(const std::string& text) {
    try {
        parse(text);
    } catch (const E& e) {
        return e.line();
    }
    ADD_FAILURE() << "no exception";
    return 0;
}

const char* kHeader = "gene_id,platform,replicate,value\n";

} // namespace

TEST(Csv, SplitsQuotedFields) {
    EXPECT_EQ(csv::split_row("a,\"b,c\",\"d\"\"e\",", ',', 1),
              (std::vector<std::string>{"a", "b,c", "d\"e", ""}));
    EXPECT_THROW(csv::split_row("a,\"b", ',', 4), ParseError);
    EXPECT_EQ(csv::escape("plain"), "plain");
    EXPECT_EQ(csv::escape("has,comma"), "\"has,comma\"");
    EXPECT_EQ(csv::escape("q\"uote"), "\"q\"\"uote\"");
}

TEST(Csv, ParseDoubleIsStrict) {
    double v = 0;
    EXPECT_TRUE(csv::parse_double("2.5", v));
    EXPECT_EQ(v, 2.5);
    EXPECT_TRUE(csv::parse_double("-1e-3", v));
    EXPECT_EQ(v, -1e-3);
    EXPECT_FALSE(csv::parse_double("NaN", v));
    EXPECT_FALSE(csv::parse_double("inf", v));
    EXPECT_FALSE(csv::parse_double("1.5x", v));
    EXPECT_FALSE(csv::parse_double("", v));
}

TEST(ParseTable, SingleRow) {
    const auto r = parse(std::string(kHeader) + "g1,PCR,0,2.5\n");
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].gene_id, "g1");
    EXPECT_EQ(r[0].platform, Platform::Pcr);
    EXPECT_EQ(r[0].replicate, 0u);
    EXPECT_EQ(r[0].value, 2.5);
    EXPECT_EQ(r[0].line, 2u);
}

TEST(ParseTable, PreservesRowOrder) {
    const auto r = parse(std::string(kHeader) + "g1,PCR,2,3\ng1,PCR,0,1\ng1,PCR,1,2\n");
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r[0].replicate, 2u);
    EXPECT_EQ(r[1].replicate, 0u);
    EXPECT_EQ(r[2].replicate, 1u);
}

TEST(ParseTable, TabDelimitedCrlfAndBom) {
    const auto r = parse("\xEF\xBB\xBFgene_id\tplatform\treplicate\tvalue\r\ng1\tRNASEQ\t0\t1.25\r\n\r\n");
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].platform, Platform::RnaSeq);
    EXPECT_EQ(r[0].value, 1.25);
}

TEST(ParseTable, ErrorsCarryLineNumbers) {
    EXPECT_EQ(line_of<ParseError>(std::string(kHeader) + "g1,PCR,0,1\ng1,PCR,1,NaN\n"), 3u);
    EXPECT_EQ(line_of<ParseError>(std::string(kHeader) + "g1,PCR,0\n"), 2u);
    EXPECT_EQ(line_of<ParseError>(std::string(kHeader) + "g1,PCR,-1,2\n"), 2u);
    EXPECT_EQ(line_of<ParseError>(std::string(kHeader) + ",PCR,0,2\n"), 2u);
    EXPECT_EQ(line_of<EnumValueError>(std::string(kHeader) + "g1,pcr,0,2\n"), 2u);
    EXPECT_EQ(line_of<DuplicateError>(std::string(kHeader) + "g1,PCR,0,2\ng1,PCR,0,3\n"), 3u);
    EXPECT_EQ(line_of<ParseError>("gene,platform,replicate,value\n"), 1u);
    EXPECT_THROW(parse(""), ParseError);
}

TEST(Collapse, LinearLogsThenAverages) {
    const auto recs = parse(std::string(kHeader) + "g1,PCR,0,4\ng1,PCR,1,16\n");
    const auto c = collapse_replicates(recs, Scale::Linear);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_DOUBLE_EQ(c[0].value, 3.0);
    const auto m = collapse_replicates(recs, Scale::Linear, AveragingOrder::MeanThenLog);
    EXPECT_DOUBLE_EQ(m[0].value, std::log2(10.0));
}

TEST(Collapse, Log2Averages) {
    const auto c = collapse_replicates(parse(std::string(kHeader) + "g1,PCR,0,1.0\ng1,PCR,1,3.0\n"), Scale::Log2);
    EXPECT_DOUBLE_EQ(c[0].value, 2.0);
}

TEST(Collapse, NonPositiveLinearValueNamesGeneAndReplicate) {
    const auto recs = parse(std::string(kHeader) + "g1,PCR,0,4\ng7,MICROARRAY,3,0\n");
    try {
        collapse_replicates(recs, Scale::Linear);
        FAIL();
    } catch (const DomainError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("g7"), std::string::npos);
        EXPECT_NE(what.find("replicate 3"), std::string::npos);
    }
}

TEST(Collapse, PermutationInvariantInReplicateOrder) {
    Rng rng = Rng::stream(3, "perm");
    std::vector<RawRecord> recs;
    for (std::size_t r = 0; r < 9; ++r) recs.push_back({"g", Platform::Pcr, r, std::exp(rng.normal()), r + 2});
    const double base = collapse_replicates(recs, Scale::Linear)[0].value;
    for (int trial = 0; trial < 20; ++trial) {
        for (std::size_t i = recs.size() - 1; i > 0; --i) std::swap(recs[i], recs[rng.below(i + 1)]);
        EXPECT_EQ(collapse_replicates(recs, Scale::Linear)[0].value, base);
        EXPECT_EQ(collapse_replicates(recs, Scale::Linear, AveragingOrder::MeanThenLog)[0].value,
                  collapse_replicates(recs, Scale::Linear, AveragingOrder::MeanThenLog)[0].value);
    }
}

TEST(BuildTable, NestedSetSizes) {
    const auto recs = parse(std::string(kHeader) +
                            "g1,PCR,0,1\ng1,MICROARRAY,0,2\ng1,RNASEQ,0,3\n"
                            "g2,MICROARRAY,0,2\ng2,RNASEQ,0,3\ng3,RNASEQ,0,3\n");
    const auto t = build_table(collapse_replicates(recs, Scale::Log2));
    EXPECT_EQ(t.set_sizes(), (SetSizes{1, 2, 3}));
    EXPECT_EQ(t.genes()[0].set(), GeneSet::A);
    EXPECT_EQ(t.genes()[1].set(), GeneSet::BminusA);
    EXPECT_EQ(t.genes()[2].set(), GeneSet::CminusB);
}

TEST(BuildTable, NestingViolationListsGenes) {
    const auto recs = parse(std::string(kHeader) + "g1,PCR,0,1\ng1,RNASEQ,0,3\ng2,MICROARRAY,0,1\n");
    try {
        build_table(collapse_replicates(recs, Scale::Log2));
        FAIL();
    } catch (const NestingError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("g1"), std::string::npos);
        EXPECT_NE(what.find("g2"), std::string::npos);
    }
}

TEST(BuildTable, EmptyInputGivesEmptyTable) {
    const auto t = build_table({});
    EXPECT_EQ(t.set_sizes(), (SetSizes{0, 0, 0}));
}

TEST(BuildTable, SetSizesAlwaysNested) {
    Rng rng = Rng::stream(11, "nested");
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<CollapsedValue> c;
        for (int g = 0; g < 30; ++g) {
            const std::string id = "g" + std::to_string(g);
            const auto depth = rng.below(3);
            c.push_back({id, Platform::RnaSeq, rng.normal()});
            if (depth >= 1) c.push_back({id, Platform::Microarray, rng.normal()});
            if (depth >= 2) c.push_back({id, Platform::Pcr, rng.normal()});
        }
        const auto s = build_table(c).set_sizes();
        EXPECT_LE(s.n, s.m);
        EXPECT_LE(s.m, s.l);
        EXPECT_EQ(s.l, 30u);
    }
}

TEST(Filter, DemotesOutOfRangeGenesOnly) {
    MeasurementTable t({Gene{"low", -7.0, 1.0, 2.0}, Gene{"mid", 0.0, 1.0, 2.0}, Gene{"high", 4.5, 1.0, 2.0},
                        Gene{"edge", 4.0, 1.0, 2.0}, Gene{"b", std::nullopt, 1.0, 2.0}});
    const auto f = filter_expression_range(t, kDefaultRangeLo, kDefaultRangeHi);
    EXPECT_EQ(f.genes()[0].set(), GeneSet::BminusA);
    EXPECT_EQ(f.genes()[1].set(), GeneSet::A);
    EXPECT_EQ(f.genes()[2].set(), GeneSet::BminusA);
    EXPECT_EQ(f.genes()[3].set(), GeneSet::A);
    EXPECT_EQ(f.genes()[4].set(), GeneSet::BminusA);
    EXPECT_EQ(*f.genes()[0].y, 1.0);
    EXPECT_EQ(*f.genes()[0].z, 2.0);
    EXPECT_EQ(f.set_sizes(), (SetSizes{2, 5, 5}));
}

TEST(Filter, AllOutsideGivesEmptyA) {
    MeasurementTable t({Gene{"a", -9.0, 1.0, 2.0}, Gene{"b", 8.0, 1.0, 2.0}});
    EXPECT_EQ(filter_expression_range(t, -6, 4).set_sizes().n, 0u);
    EXPECT_THROW(filter_expression_range(t, 4, -6), DomainError);
}

TEST(Filter, Idempotent) {
    Rng rng = Rng::stream(8, "filter");
    std::vector<Gene> genes;
    for (int g = 0; g < 200; ++g) genes.push_back(Gene{"g" + std::to_string(g), 5 * rng.normal(), rng.normal(), rng.normal()});
    const auto once = filter_expression_range(MeasurementTable(genes), -6, 4);
    const auto twice = filter_expression_range(once, -6, 4);
    for (std::size_t j = 0; j < once.size(); ++j) {
        EXPECT_EQ(once.genes()[j].x.has_value(), twice.genes()[j].x.has_value());
    }
}

TEST(MeasurementTable, RejectsBadNestingAndDuplicates) {
    EXPECT_THROW(MeasurementTable({Gene{"g", 1.0, std::nullopt, 2.0}}), NestingError);
    EXPECT_THROW(MeasurementTable({Gene{"g", std::nullopt, 1.0, std::nullopt}}), NestingError);
    EXPECT_THROW(MeasurementTable({Gene{"g", std::nullopt, std::nullopt, std::nullopt}}), NestingError);
    EXPECT_THROW(MeasurementTable({Gene{"g", std::nullopt, std::nullopt, 1.0}, Gene{"g", std::nullopt, std::nullopt, 2.0}}),
                 DomainError);
}

TEST(CanonicalTable, RoundTripsFullPrecision) {
    Rng rng = Rng::stream(9, "roundtrip");
    std::vector<Gene> genes;
    for (int g = 0; g < 100; ++g) {
        Gene gene{"gene \"" + std::to_string(g) + "\",x", std::nullopt, std::nullopt, rng.normal() * 1e3};
        if (g % 3 != 2) gene.y = rng.normal() / 7.0;
        if (g % 3 == 0) gene.x = std::ldexp(rng.uniform(), -40);
        genes.push_back(gene);
    }
    MeasurementTable t(genes);
    std::stringstream s;
    write_canonical_table(s, t);
    const auto back = read_canonical_table(s);
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t j = 0; j < t.size(); ++j) {
        EXPECT_EQ(back.genes()[j].id, t.genes()[j].id);
        EXPECT_EQ(back.genes()[j].x, t.genes()[j].x);
        EXPECT_EQ(back.genes()[j].y, t.genes()[j].y);
        EXPECT_EQ(back.genes()[j].z, t.genes()[j].z);
    }
}

TEST(CanonicalTable, RawTextRoundTrip) {
    // Values written in the input keep their exact decimal meaning.
    const std::string text = std::string(kHeader) +
                             "g1,PCR,0,0.1\ng1,MICROARRAY,0,-2.000000000000001\ng1,RNASEQ,0,123456.789\n"
                             "g2,RNASEQ,0,1e-300\n";
    const auto t = build_table(collapse_replicates(parse(text), Scale::Log2));
    std::ostringstream out;
    write_canonical_table(out, t);
    EXPECT_EQ(out.str(), "gene_id,set,x,y,z\ng1,A,0.1,-2.000000000000001,123456.789\ng2,C-B,,,1e-300\n");
}

TEST(CanonicalTable, RejectsInconsistentSetColumn) {
    std::istringstream in("gene_id,set,x,y,z\ng1,A,,1,2\n");
    EXPECT_THROW(read_canonical_table(in), ParseError);
}
