from bgcosim.cosim import write_trace_csvs


def export_csv(trace, network, out_dir):
    return write_trace_csvs(trace, network, out_dir)
