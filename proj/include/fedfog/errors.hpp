#pragma once

#include <stdexcept>
#include <string>

namespace fedfog {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TopologyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MembershipError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PartitionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AggregationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AccountingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ReportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fedfog
