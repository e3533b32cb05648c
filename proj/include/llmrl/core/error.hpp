#pragma once

#include <stdexcept>
#include <string>

namespace llmrl {

/// Base for every error raised by the library. Carries the name of the
/// module that raised it so the CLI can print module-tagged messages.
class Error : public std::runtime_error {
public:
    Error(std::string module, std::string kind, const std::string& message)
        : std::runtime_error("[" + module + "] " + kind + ": " + message),
          module_(std::move(module)), kind_(std::move(kind)), message_(message) {}

    const std::string& module() const noexcept { return module_; }
    const std::string& kind() const noexcept { return kind_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string module_;
    std::string kind_;
    std::string message_;
};

#define LLMRL_DEFINE_ERROR(Name, Kind)                                   \
    class Name : public Error {                                          \
    public:                                                              \
        Name(std::string module, const std::string& message)             \
            : Error(std::move(module), Kind, message) {}                 \
    };

LLMRL_DEFINE_ERROR(SchemaError, "schema error")
LLMRL_DEFINE_ERROR(DataError, "data error")
LLMRL_DEFINE_ERROR(AlignmentError, "alignment error")
LLMRL_DEFINE_ERROR(WindowError, "window error")
LLMRL_DEFINE_ERROR(HorizonError, "horizon error")
LLMRL_DEFINE_ERROR(ArgumentError, "argument error")
LLMRL_DEFINE_ERROR(ValidationError, "validation error")
LLMRL_DEFINE_ERROR(TemplateError, "template error")
LLMRL_DEFINE_ERROR(SamplingError, "sampling error")
LLMRL_DEFINE_ERROR(ScheduleError, "schedule error")
LLMRL_DEFINE_ERROR(ProtocolError, "protocol error")
LLMRL_DEFINE_ERROR(TrainingError, "training error")
LLMRL_DEFINE_ERROR(DegenerateSeriesError, "degenerate series")
LLMRL_DEFINE_ERROR(ReportError, "report error")
LLMRL_DEFINE_ERROR(ConfigError, "config error")

#undef LLMRL_DEFINE_ERROR

}  // namespace llmrl
