from bgcosim.plots import emit_plots


def render_plots(trace, analyses, out_dir):
    return emit_plots(trace, analyses, out_dir)
