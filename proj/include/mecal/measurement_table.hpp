#ifndef MECAL_MEASUREMENT_TABLE_HPP
#define MECAL_MEASUREMENT_TABLE_HPP

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mecal {

enum class Platform { Pcr, Microarray, RnaSeq };

std::string_view to_string(Platform p);
std::optional<Platform> parse_platform(std::string_view token);

/// Nested gene sets: A (all three platforms), B-A (microarray and RNA-Seq),
/// C-B (RNA-Seq only).
enum class GeneSet { A, BminusA, CminusB };

std::string_view to_string(GeneSet s);
std::optional<GeneSet> parse_gene_set(std::string_view token);

/// log2-scale measurements of one gene. x is qRT-PCR, y microarray, z RNA-Seq.
struct Gene {
    std::string id;
    std::optional<double> x;
    std::optional<double> y;
    std::optional<double> z;

    GeneSet set() const;
};

struct SetSizes {
    std::size_t n = 0; ///< |A|
    std::size_t m = 0; ///< |B|
    std::size_t l = 0; ///< |C|

    friend bool operator==(const SetSizes&, const SetSizes&) = default;
};

/**
 * Validated per-gene measurements with A ⊂ B ⊂ C membership.
 *
 * Construction rejects genes whose platforms break the nesting (x without y
 * and z, y without z, or no measurement at all) and repeated gene ids.
 * Gene order is preserved as given.
 */
class MeasurementTable {
public:
    MeasurementTable() = default;
    explicit MeasurementTable(std::vector<Gene> genes);

    const std::vector<Gene>& genes() const { return genes_; }
    std::size_t size() const { return genes_.size(); }
    SetSizes set_sizes() const { return sizes_; }

    /// Indices of genes in A, in table order.
    std::vector<std::size_t> a_indices() const;

    /// New table restricted to `indices`, in the given order.
    MeasurementTable subset(const std::vector<std::size_t>& indices) const;

    /// Index of a gene id, or nullopt.
    std::optional<std::size_t> find(std::string_view id) const;

private:
    std::vector<Gene> genes_;
    std::unordered_map<std::string, std::size_t> index_;
    SetSizes sizes_;
};

/// Canonical table: header `gene_id,set,x,y,z`, absent cells empty, shortest
/// round-trip decimal representation for every value, LF line endings.
void write_canonical_table(std::ostream& out, const MeasurementTable& table);
MeasurementTable read_canonical_table(std::istream& in);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

} // namespace mecal

#endif
