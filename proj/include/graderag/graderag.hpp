#pragma once

#include "graderag/config.hpp"
#include "graderag/corpus.hpp"
#include "graderag/embed.hpp"
#include "graderag/eval.hpp"
#include "graderag/grade.hpp"
#include "graderag/index.hpp"
#include "graderag/retrieve.hpp"
#include "graderag/runner.hpp"
#include "graderag/text.hpp"
#include "graderag/types.hpp"
