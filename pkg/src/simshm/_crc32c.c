/* CRC-32C (Castagnoli, poly 0x1EDC6F41) over arbitrary buffers.
 *
 * Software path is slice-by-8; on x86-64 a hardware path using the SSE4.2
 * crc32 instruction is selected at import time when the CPU supports it.
 * Convention matches zlib.crc32: crc32c(data, prev) chains, crc32c(data)
 * yields the final checksum (init 0xFFFFFFFF, final xor 0xFFFFFFFF folded
 * into the 0-based external value).
 */
#define PY_SSIZE_T_CLEAN
#include <Python.h>
#include <stdint.h>
#include <stddef.h>

#define POLY_REFLECTED 0x82F63B78u

static uint32_t crc_table[8][256];

static void
init_tables(void)
{
    for (int i = 0; i < 256; i++) {
        uint32_t c = (uint32_t)i;
        for (int k = 0; k < 8; k++)
            c = (c & 1) ? (c >> 1) ^ POLY_REFLECTED : c >> 1;
        crc_table[0][i] = c;
    }
    for (int i = 0; i < 256; i++) {
        uint32_t c = crc_table[0][i];
        for (int t = 1; t < 8; t++) {
            c = crc_table[0][c & 0xFF] ^ (c >> 8);
            crc_table[t][i] = c;
        }
    }
}

static uint32_t
crc32c_sw(uint32_t crc, const unsigned char *buf, size_t len)
{
    while (len && ((uintptr_t)buf & 7) != 0) {
        crc = crc_table[0][(crc ^ *buf++) & 0xFF] ^ (crc >> 8);
        len--;
    }
    while (len >= 8) {
        uint64_t word;
        memcpy(&word, buf, 8);
        word ^= (uint64_t)crc;
        crc = crc_table[7][word & 0xFF] ^
              crc_table[6][(word >> 8) & 0xFF] ^
              crc_table[5][(word >> 16) & 0xFF] ^
              crc_table[4][(word >> 24) & 0xFF] ^
              crc_table[3][(word >> 32) & 0xFF] ^
              crc_table[2][(word >> 40) & 0xFF] ^
              crc_table[1][(word >> 48) & 0xFF] ^
              crc_table[0][(word >> 56) & 0xFF];
        buf += 8;
        len -= 8;
    }
    while (len--)
        crc = crc_table[0][(crc ^ *buf++) & 0xFF] ^ (crc >> 8);
    return crc;
}

#if defined(__x86_64__) && defined(__GNUC__)
#define HAVE_HW_CRC 1

__attribute__((target("sse4.2"))) static uint32_t
crc32c_hw(uint32_t crc, const unsigned char *buf, size_t len)
{
    while (len && ((uintptr_t)buf & 7) != 0) {
        crc = __builtin_ia32_crc32qi(crc, *buf++);
        len--;
    }
    uint64_t crc64 = crc;
    while (len >= 8) {
        uint64_t word;
        memcpy(&word, buf, 8);
        crc64 = __builtin_ia32_crc32di(crc64, word);
        buf += 8;
        len -= 8;
    }
    crc = (uint32_t)crc64;
    while (len--)
        crc = __builtin_ia32_crc32qi(crc, *buf++);
    return crc;
}
#endif

static uint32_t (*crc_impl)(uint32_t, const unsigned char *, size_t) = crc32c_sw;

static PyObject *
py_crc32c(PyObject *self, PyObject *args)
{
    Py_buffer view;
    unsigned int prev = 0;

    if (!PyArg_ParseTuple(args, "y*|I", &view, &prev))
        return NULL;

    uint32_t crc = (uint32_t)prev ^ 0xFFFFFFFFu;
    if (view.len > 0) {
        if (view.len > 65536) {
            Py_BEGIN_ALLOW_THREADS
            crc = crc_impl(crc, (const unsigned char *)view.buf, (size_t)view.len);
            Py_END_ALLOW_THREADS
        }
        else {
            crc = crc_impl(crc, (const unsigned char *)view.buf, (size_t)view.len);
        }
    }
    crc ^= 0xFFFFFFFFu;
    PyBuffer_Release(&view);
    return PyLong_FromUnsignedLong(crc);
}

static PyObject *
py_hardware_accelerated(PyObject *self, PyObject *noargs)
{
#if HAVE_HW_CRC
    return PyBool_FromLong(crc_impl != crc32c_sw);
#else
    Py_RETURN_FALSE;
#endif
}

static PyMethodDef methods[] = {
    {"crc32c", py_crc32c, METH_VARARGS,
     "crc32c(data, prev=0) -> int\n\nCRC-32C of data, chained from prev."},
    {"hardware_accelerated", py_hardware_accelerated, METH_NOARGS,
     "True when the SSE4.2 crc32 instruction path is in use."},
    {NULL, NULL, 0, NULL},
};

static struct PyModuleDef moduledef = {
    PyModuleDef_HEAD_INIT, "_crc32c", NULL, -1, methods,
};

PyMODINIT_FUNC
PyInit__crc32c(void)
{
    init_tables();
#if HAVE_HW_CRC
    if (__builtin_cpu_supports("sse4.2"))
        crc_impl = crc32c_hw;
#endif
    return PyModule_Create(&moduledef);
}
