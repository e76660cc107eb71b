#include "proxysynth/codegen.hpp"

namespace proxysynth {

namespace {

constexpr std::string_view kShim = R"(#ifndef PROXY_SHIM_H
#define PROXY_SHIM_H
/* Stand-in for mpi.h. Calls log one line to stdout instead of communicating.
   PROXY_SHIM_RANK and PROXY_SHIM_SIZE select the rank being replayed. */
#include <stdio.h>
#include <stdlib.h>

typedef int MPI_Comm;
typedef int MPI_Request;
typedef int MPI_Datatype;
typedef int MPI_Op;
typedef int MPI_Errhandler;
typedef struct { int MPI_SOURCE; int MPI_TAG; int MPI_ERROR; } MPI_Status;

#define MPI_SUCCESS 0
#define MPI_COMM_WORLD 0
#define MPI_COMM_NULL (-1)
#define MPI_REQUEST_NULL (-1)
#define MPI_BYTE 1
#define MPI_BOR 1
#define MPI_ANY_TAG (-1)
#define MPI_ANY_SOURCE (-2)
#define MPI_UNDEFINED (-32766)
#define MPI_ERRORS_RETURN 1
#define MPI_STATUS_IGNORE ((MPI_Status *)0)

#define PROXY_EVENT(key) printf("(%s)\n", key)

static int proxy_shim_rank_;
static int proxy_shim_size_ = 1;
static int proxy_shim_next_comm_ = 1;
static int proxy_shim_next_req_ = 1;

static inline int proxy_shim_env_(const char *name, int fallback)
{
  const char *v = getenv(name);
  return v ? atoi(v) : fallback;
}

static inline int MPI_Init(int *argc, char ***argv)
{
  (void)argc;
  (void)argv;
  proxy_shim_rank_ = proxy_shim_env_("PROXY_SHIM_RANK", 0);
  proxy_shim_size_ = proxy_shim_env_("PROXY_SHIM_SIZE", 1);
  printf("MPI_Init rank=%d size=%d\n", proxy_shim_rank_, proxy_shim_size_);
  return MPI_SUCCESS;
}

static inline int MPI_Finalize(void)
{
  printf("MPI_Finalize\n");
  fflush(stdout);
  return MPI_SUCCESS;
}

static inline int MPI_Abort(MPI_Comm comm, int code)
{
  (void)comm;
  fflush(stdout);
  exit(code);
}

static inline int MPI_Comm_rank(MPI_Comm comm, int *rank)
{
  (void)comm;
  *rank = proxy_shim_rank_;
  return MPI_SUCCESS;
}

static inline int MPI_Comm_size(MPI_Comm comm, int *size)
{
  (void)comm;
  *size = proxy_shim_size_;
  return MPI_SUCCESS;
}

static inline int MPI_Comm_set_errhandler(MPI_Comm comm, MPI_Errhandler handler)
{
  (void)comm;
  (void)handler;
  return MPI_SUCCESS;
}

static inline int MPI_Send(const void *buf, int count, MPI_Datatype type, int dest,
                           int tag, MPI_Comm comm)
{
  (void)buf;
  (void)type;
  printf("MPI_Send count=%d dest=%d tag=%d comm=%d\n", count, dest, tag, comm);
  return MPI_SUCCESS;
}

static inline int MPI_Recv(void *buf, int count, MPI_Datatype type, int source, int tag,
                           MPI_Comm comm, MPI_Status *status)
{
  (void)buf;
  (void)type;
  (void)status;
  printf("MPI_Recv count=%d source=%d tag=%d comm=%d\n", count, source, tag, comm);
  return MPI_SUCCESS;
}

static inline int MPI_Isend(const void *buf, int count, MPI_Datatype type, int dest,
                            int tag, MPI_Comm comm, MPI_Request *req)
{
  (void)buf;
  (void)type;
  *req = proxy_shim_next_req_++;
  printf("MPI_Isend count=%d dest=%d tag=%d comm=%d\n", count, dest, tag, comm);
  return MPI_SUCCESS;
}

static inline int MPI_Irecv(void *buf, int count, MPI_Datatype type, int source, int tag,
                            MPI_Comm comm, MPI_Request *req)
{
  (void)buf;
  (void)type;
  *req = proxy_shim_next_req_++;
  printf("MPI_Irecv count=%d source=%d tag=%d comm=%d\n", count, source, tag, comm);
  return MPI_SUCCESS;
}

static inline int MPI_Wait(MPI_Request *req, MPI_Status *status)
{
  (void)status;
  printf("MPI_Wait request=%d\n", *req);
  *req = MPI_REQUEST_NULL;
  return MPI_SUCCESS;
}

static inline int MPI_Sendrecv(const void *sbuf, int scount, MPI_Datatype stype, int dest,
                               int stag, void *rbuf, int rcount, MPI_Datatype rtype,
                               int source, int rtag, MPI_Comm comm, MPI_Status *status)
{
  (void)sbuf;
  (void)stype;
  (void)rbuf;
  (void)rtype;
  (void)status;
  printf("MPI_Sendrecv count=%d dest=%d tag=%d count=%d source=%d tag=%d comm=%d\n",
         scount, dest, stag, rcount, source, rtag, comm);
  return MPI_SUCCESS;
}

static inline int MPI_Barrier(MPI_Comm comm)
{
  printf("MPI_Barrier comm=%d\n", comm);
  return MPI_SUCCESS;
}

static inline int MPI_Allreduce(const void *sbuf, void *rbuf, int count, MPI_Datatype type,
                                MPI_Op op, MPI_Comm comm)
{
  (void)sbuf;
  (void)rbuf;
  (void)type;
  (void)op;
  printf("MPI_Allreduce count=%d comm=%d\n", count, comm);
  return MPI_SUCCESS;
}

static inline int MPI_Reduce(const void *sbuf, void *rbuf, int count, MPI_Datatype type,
                             MPI_Op op, int root, MPI_Comm comm)
{
  (void)sbuf;
  (void)rbuf;
  (void)type;
  (void)op;
  printf("MPI_Reduce count=%d root=%d comm=%d\n", count, root, comm);
  return MPI_SUCCESS;
}

static inline int MPI_Bcast(void *buf, int count, MPI_Datatype type, int root,
                            MPI_Comm comm)
{
  (void)buf;
  (void)type;
  printf("MPI_Bcast count=%d root=%d comm=%d\n", count, root, comm);
  return MPI_SUCCESS;
}

static inline int MPI_Alltoall(const void *sbuf, int scount, MPI_Datatype stype, void *rbuf,
                               int rcount, MPI_Datatype rtype, MPI_Comm comm)
{
  (void)sbuf;
  (void)stype;
  (void)rbuf;
  (void)rtype;
  printf("MPI_Alltoall count=%d count=%d comm=%d\n", scount, rcount, comm);
  return MPI_SUCCESS;
}

static inline int MPI_Comm_dup(MPI_Comm comm, MPI_Comm *out)
{
  *out = proxy_shim_next_comm_++;
  printf("MPI_Comm_dup comm=%d new=%d\n", comm, *out);
  return MPI_SUCCESS;
}

static inline int MPI_Comm_split(MPI_Comm comm, int color, int key, MPI_Comm *out)
{
  *out = color == MPI_UNDEFINED ? MPI_COMM_NULL : proxy_shim_next_comm_++;
  printf("MPI_Comm_split comm=%d color=%d key=%d new=%d\n", comm, color, key, *out);
  return MPI_SUCCESS;
}

static inline int MPI_Comm_free(MPI_Comm *comm)
{
  printf("MPI_Comm_free comm=%d\n", *comm);
  *comm = MPI_COMM_NULL;
  return MPI_SUCCESS;
}

#endif
)";

}  // namespace

std::string shim_header() { return std::string(kShim); }

}  // namespace proxysynth
