#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace btw {

// Evaluation-time value kinds. Dates count days since 1970-01-01, times count
// seconds of day, timestamps count seconds since the epoch, durations are a
// signed span in seconds.
enum class ValueKind {
  Bool,
  Int,
  Text,
  Date,
  Time,
  Timestamp,
  Duration,
  Record,
};

inline const char* to_string(ValueKind k) {
  switch (k) {
    case ValueKind::Bool: return "bool";
    case ValueKind::Int: return "int";
    case ValueKind::Text: return "text";
    case ValueKind::Date: return "date";
    case ValueKind::Time: return "time";
    case ValueKind::Timestamp: return "timestamp";
    case ValueKind::Duration: return "duration";
    case ValueKind::Record: return "record";
  }
  return "?";
}

inline std::optional<ValueKind> value_kind_from_name(const std::string& s) {
  if (s == "bool") return ValueKind::Bool;
  if (s == "int") return ValueKind::Int;
  if (s == "text") return ValueKind::Text;
  if (s == "date") return ValueKind::Date;
  if (s == "time") return ValueKind::Time;
  if (s == "timestamp") return ValueKind::Timestamp;
  if (s == "duration") return ValueKind::Duration;
  return std::nullopt;
}

// Civil-date helpers (Howard Hinnant's algorithms, days since 1970-01-01).
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

struct Record;
using RecordPtr = std::shared_ptr<const Record>;

class Value {
 public:
  Value() : kind_(ValueKind::Bool), num_(0) {}

  static Value boolean(bool b) { return Value(ValueKind::Bool, b ? 1 : 0); }
  static Value integer(std::int64_t i) { return Value(ValueKind::Int, i); }
  static Value text(std::string s) {
    Value v(ValueKind::Text, 0);
    v.text_ = std::move(s);
    return v;
  }
  static Value date(std::int64_t days) { return Value(ValueKind::Date, days); }
  static Value time(std::int64_t secs) { return Value(ValueKind::Time, secs); }
  static Value timestamp(std::int64_t secs) {
    return Value(ValueKind::Timestamp, secs);
  }
  static Value duration(std::int64_t secs) {
    return Value(ValueKind::Duration, secs);
  }
  static Value record(RecordPtr r) {
    Value v(ValueKind::Record, 0);
    v.rec_ = std::move(r);
    return v;
  }

  ValueKind kind() const { return kind_; }
  bool as_bool() const { return num_ != 0; }
  std::int64_t num() const { return num_; }
  const std::string& as_text() const { return text_; }
  const RecordPtr& as_record() const { return rec_; }

  bool operator==(const Value& o) const;
  bool operator!=(const Value& o) const { return !(*this == o); }

 private:
  Value(ValueKind k, std::int64_t n) : kind_(k), num_(n) {}

  ValueKind kind_;
  std::int64_t num_;
  std::string text_;
  RecordPtr rec_;
};

struct Record {
  // Field order follows the schema declaration, which keeps every
  // serialization of a record deterministic.
  std::vector<std::pair<std::string, Value>> fields;

  const Value* find(const std::string& name) const {
    for (const auto& [k, v] : fields)
      if (k == name) return &v;
    return nullptr;
  }
  bool operator==(const Record& o) const { return fields == o.fields; }
};

inline bool Value::operator==(const Value& o) const {
  if (kind_ != o.kind_) return false;
  switch (kind_) {
    case ValueKind::Text: return text_ == o.text_;
    case ValueKind::Record:
      if (!rec_ || !o.rec_) return rec_ == o.rec_;
      return *rec_ == *o.rec_;
    default: return num_ == o.num_;
  }
}

// Total order used by predicate-protocol buffers and comparison operators.
// Only meaningful between values of the same kind.
inline int compare_values(const Value& a, const Value& b) {
  if (a.kind() == ValueKind::Text)
    return a.as_text().compare(b.as_text());
  if (a.num() < b.num()) return -1;
  if (a.num() > b.num()) return 1;
  return 0;
}

inline std::string format_date(std::int64_t days) {
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
  return buf;
}

inline std::string format_time(std::int64_t secs) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d:%02d:%02d", int(secs / 3600),
                int(secs / 60 % 60), int(secs % 60));
  return buf;
}

inline std::string value_to_string(const Value& v) {
  switch (v.kind()) {
    case ValueKind::Bool: return v.as_bool() ? "true" : "false";
    case ValueKind::Int: return std::to_string(v.num());
    case ValueKind::Text: return v.as_text();
    case ValueKind::Date: return format_date(v.num());
    case ValueKind::Time: return format_time(v.num());
    case ValueKind::Timestamp:
      return format_date(v.num() / 86400) + "T" + format_time(v.num() % 86400);
    case ValueKind::Duration: return std::to_string(v.num()) + "s";
    case ValueKind::Record: {
      std::string out = "{";
      bool first = true;
      if (v.as_record()) {
        for (const auto& [k, f] : v.as_record()->fields) {
          if (!first) out += ", ";
          first = false;
          out += k + ": " + value_to_string(f);
        }
      }
      return out + "}";
    }
  }
  return "?";
}

constexpr std::int64_t kSecondsPerDay = 86400;

}  // namespace btw
