#pragma once

#include "vlh/bitcodes.hpp"
#include "vlh/datasets.hpp"
#include "vlh/eval.hpp"
#include "vlh/lsh.hpp"
#include "vlh/mih.hpp"
#include "vlh/quantizer.hpp"
#include "vlh/vector_set.hpp"
#include "vlh/vlc.hpp"
