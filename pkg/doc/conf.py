# -*- coding: utf-8 -*-
#
# Sphinx configuration of the ssbsync documentation.

import os
import sys

from recommonmark.parser import CommonMarkParser
from recommonmark.transform import AutoStructify
import sphinx_rtd_theme

# library modules are flat, like on the test path
sys.path.insert(0, os.path.abspath('../src/ssb'))
sys.path.insert(0, os.path.abspath('../src/bench'))

# -- General configuration ------------------------------------------------

extensions = ["sphinx.ext.autodoc"]
autodoc_mock_imports = ['joblib']
templates_path = ['_templates']

source_suffix = ['.rst', '.md']
source_parsers = {
    '.md': CommonMarkParser,
}

github_doc_root = 'https://github.com/rtfd/recommonmark/tree/master/doc/'


def setup(app):
    app.add_config_value('recommonmark_config', {
        'url_resolver': lambda url: github_doc_root + url,
        'auto_toc_tree_section': 'Contents',
    }, True)
    app.add_transform(AutoStructify)


master_doc = 'index'

project = u'ssbsync'
copyright = u'2026, ssbsync developers'
author = u'ssbsync developers'
version = u'1.0'
release = u'1.0'

language = None
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'

# -- Options for HTML output ----------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
html_sidebars = {
    '**': [
        'relations.html',
        'searchbox.html',
    ]
}
htmlhelp_basename = 'ssbsyncdoc'

# -- Options for other outputs --------------------------------------------

latex_documents = [
    (master_doc, 'ssbsync.tex', u'ssbsync Documentation', author, 'manual'),
]
man_pages = [
    (master_doc, 'ssbsync', u'ssbsync Documentation', [author], 1),
]
texinfo_documents = [
    (master_doc, 'ssbsync', u'ssbsync Documentation', author, 'ssbsync',
     'Dual-rate SSB timing search and cell search benchmark.', 'Miscellaneous'),
]
