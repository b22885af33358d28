# init