#ifndef MECAL_INGEST_HPP
#define MECAL_INGEST_HPP

#include "mecal/measurement_table.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mecal {

/// One data row of a raw long-format measurement file.
struct RawRecord {
    std::string gene_id;
    Platform platform;
    std::size_t replicate;
    double value;
    std::size_t line; ///< 1-based source line, for error reporting
};

/// Column delimiter. Auto-detection picks tab when the header contains one.
struct TableFormat {
    std::optional<char> delimiter;
};

enum class Scale { Linear, Log2 };

/// Order of the log2 transform and replicate averaging for linear input.
enum class AveragingOrder { LogThenMean, MeanThenLog };

/**
 * Parses a table with header `gene_id,platform,replicate,value`.
 *
 * Values must be finite. (gene, platform, replicate) triples must be unique.
 * Blank lines are skipped. Row order is preserved.
 */
std::vector<RawRecord> parse_table(std::istream& in, TableFormat format = {});

/// Replicate-averaged value of one gene on one platform.
struct CollapsedValue {
    std::string gene_id;
    Platform platform;
    double value; ///< log2 scale
};

/// Averages technical replicates per (gene, platform). Output follows the
/// first appearance of each pair in `records`.
std::vector<CollapsedValue> collapse_replicates(const std::vector<RawRecord>& records, Scale scale,
                                                AveragingOrder order = AveragingOrder::LogThenMean);

/// Builds the nested-set table. Genes are listed by first appearance.
/// Throws NestingError when a gene's platform coverage breaks A ⊂ B ⊂ C.
MeasurementTable build_table(const std::vector<CollapsedValue>& collapsed);

/// Expression-range filter for structural estimation. A genes whose x lies
/// outside [lo, hi] lose their x value and drop to B-A; every other gene is
/// unchanged. Idempotent.
MeasurementTable filter_expression_range(const MeasurementTable& table, double lo, double hi);

inline constexpr double kDefaultRangeLo = -6.0;
inline constexpr double kDefaultRangeHi = 4.0;

} // namespace mecal

#endif
